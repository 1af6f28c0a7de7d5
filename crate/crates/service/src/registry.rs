use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::RwLock;
use patexpand_core::embedding::{self, EmbeddingModel, META_FILE};
use serde::Serialize;

use crate::ServiceError;

pub struct RegisteredModel {
    pub id: String,
    pub model: Arc<EmbeddingModel>,
    pub loaded_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModelInfo {
    pub model_id: String,
    pub scope: String,
    pub dim: usize,
    pub vocab_size: usize,
    pub subword: bool,
    pub loaded_at: DateTime<Utc>,
}

/// Models found in one directory, keyed by subdirectory name.
#[derive(Default)]
pub struct ModelSet {
    models: BTreeMap<String, Arc<RegisteredModel>>,
}

impl ModelSet {
    pub fn get(&self, id: &str) -> Option<&Arc<RegisteredModel>> {
        self.models.get(id)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Listing ordered by scope, then id.
    pub fn list(&self) -> Vec<ModelInfo> {
        let mut out: Vec<ModelInfo> = self
            .models
            .values()
            .map(|m| ModelInfo {
                model_id: m.id.clone(),
                scope: m.model.scope().to_string(),
                dim: m.model.dim(),
                vocab_size: m.model.vocab().len(),
                subword: m.model.params().subword_mode,
                loaded_at: m.loaded_at,
            })
            .collect();
        out.sort_by(|a, b| a.scope.cmp(&b.scope).then_with(|| a.model_id.cmp(&b.model_id)));
        out
    }
}

/// A model directory that failed to load during a scan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScanFailure {
    pub model_id: String,
    pub error: String,
}

/// Loads every subdirectory of `dir` that holds a model. Unchanged models
/// from `previous` are reused rather than reloaded.
pub fn scan(dir: &Path, previous: Option<&ModelSet>) -> Result<(ModelSet, Vec<ScanFailure>), ServiceError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| ServiceError::Config(format!("cannot read model directory {}: {e}", dir.display())))?;
    let mut candidates: Vec<(String, PathBuf)> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.join(META_FILE).is_file())
        .filter_map(|p| Some((p.file_name()?.to_str()?.to_owned(), p)))
        .collect();
    candidates.sort();

    let mut set = ModelSet::default();
    let mut failures = Vec::new();
    for (id, path) in candidates {
        let stamp = modified(&path);
        if let Some(old) = previous.and_then(|p| p.get(&id)) {
            if stamp.is_some_and(|s| s <= old.loaded_at) {
                set.models.insert(id, old.clone());
                continue;
            }
        }
        match embedding::load(&path) {
            Ok(model) => {
                let entry = RegisteredModel {
                    id: id.clone(),
                    model: Arc::new(model),
                    loaded_at: Utc::now(),
                };
                set.models.insert(id, Arc::new(entry));
            }
            Err(e) => {
                tracing::warn!(model_id = %id, error = %e, "skipping model");
                failures.push(ScanFailure {
                    model_id: id,
                    error: e.to_string(),
                });
            }
        }
    }
    Ok((set, failures))
}

fn modified(path: &Path) -> Option<DateTime<Utc>> {
    [META_FILE, embedding::VEC_FILE]
        .iter()
        .filter_map(|f| std::fs::metadata(path.join(f)).and_then(|m| m.modified()).ok())
        .max()
        .map(DateTime::<Utc>::from)
}

/// The live model set. Rescans swap in a whole new set, so a reader sees
/// either the old or the new one.
pub struct ModelRegistry {
    dir: PathBuf,
    current: RwLock<Arc<ModelSet>>,
}

impl ModelRegistry {
    pub fn open(dir: &Path) -> Result<Self, ServiceError> {
        let (set, _) = scan(dir, None)?;
        Ok(Self {
            dir: dir.to_owned(),
            current: RwLock::new(Arc::new(set)),
        })
    }

    pub fn current(&self) -> Arc<ModelSet> {
        self.current.read().clone()
    }

    pub fn rescan(&self) -> Result<Vec<ScanFailure>, ServiceError> {
        let previous = self.current();
        let (set, failures) = scan(&self.dir, Some(&previous))?;
        *self.current.write() = Arc::new(set);
        Ok(failures)
    }
}
