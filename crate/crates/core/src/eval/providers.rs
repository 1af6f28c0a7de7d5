use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use super::{SuggestionProvider, SynRecord};
use crate::corpus::normalize_term;
use crate::crowd::{expand_with_crowd, CrowdModel};
use crate::embedding::EmbeddingModel;
use crate::expansion::{expand, ExpansionRequest, Suggestion};
use crate::scope::UnitCode;

/// Returns the gold equivalents themselves, in sorted order.
pub struct GoldOracle {
    gold: HashMap<(String, String), Vec<String>>,
}

impl GoldOracle {
    pub fn new(records: &[SynRecord]) -> Self {
        let gold = records
            .iter()
            .map(|r| ((r.field.clone(), r.term.clone()), r.equivalents.iter().cloned().collect()))
            .collect();
        Self { gold }
    }
}

impl SuggestionProvider for GoldOracle {
    fn name(&self) -> &str {
        "gold-oracle"
    }

    fn suggest(&self, field: &str, term: &str, k: usize) -> Result<Vec<String>, String> {
        let key = (field.to_owned(), normalize_term(term));
        let gold = self.gold.get(&key).ok_or_else(|| format!("no gold record for `{term}`"))?;
        Ok(gold.iter().take(k).cloned().collect())
    }
}

/// Centroid expansion of the single head term.
///
/// Either one model for every field, or one model per field with an
/// optional fallback for fields that have none.
pub struct EmbeddingProvider {
    name: String,
    by_field: BTreeMap<String, Arc<EmbeddingModel>>,
    fallback: Option<Arc<EmbeddingModel>>,
}

impl EmbeddingProvider {
    pub fn new(name: impl Into<String>, model: Arc<EmbeddingModel>) -> Self {
        Self {
            name: name.into(),
            by_field: BTreeMap::new(),
            fallback: Some(model),
        }
    }

    pub fn scoped(
        name: impl Into<String>,
        by_field: BTreeMap<String, Arc<EmbeddingModel>>,
        fallback: Option<Arc<EmbeddingModel>>,
    ) -> Self {
        Self {
            name: name.into(),
            by_field,
            fallback,
        }
    }

    pub fn model_for(&self, field: &str) -> Option<&Arc<EmbeddingModel>> {
        self.by_field.get(field).or(self.fallback.as_ref())
    }

    fn model_or_err(&self, field: &str) -> Result<&Arc<EmbeddingModel>, String> {
        self.model_for(field)
            .ok_or_else(|| format!("no model for field `{field}`"))
    }

    pub fn suggestions(&self, field: &str, term: &str, k: usize) -> Result<Vec<Suggestion>, String> {
        let request = ExpansionRequest::new([term]).with_k(k);
        expand(self.model_or_err(field)?, &request)
            .map(|e| e.suggestions)
            .map_err(|e| e.to_string())
    }
}

impl SuggestionProvider for EmbeddingProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn suggest(&self, field: &str, term: &str, k: usize) -> Result<Vec<String>, String> {
        Ok(self.suggestions(field, term, k)?.into_iter().map(|s| s.term).collect())
    }
}

/// Positively voted crowd terms only.
///
/// A field that is itself a four-digit unit code is its own crowd scope;
/// other labels are mapped explicitly or fall back to a default scope.
pub struct CrowdProvider {
    name: String,
    crowd: CrowdModel,
    field_scopes: BTreeMap<String, UnitCode>,
    default_scope: Option<UnitCode>,
}

impl CrowdProvider {
    pub fn new(name: impl Into<String>, crowd: CrowdModel, default_scope: Option<UnitCode>) -> Self {
        Self {
            name: name.into(),
            crowd,
            field_scopes: BTreeMap::new(),
            default_scope,
        }
    }

    pub fn with_field_scope(mut self, field: impl Into<String>, scope: UnitCode) -> Self {
        self.field_scopes.insert(field.into(), scope);
        self
    }

    pub fn scope_for(&self, field: &str) -> Result<UnitCode, String> {
        if let Some(code) = self.field_scopes.get(field) {
            return Ok(code.clone());
        }
        if let Ok(code) = field.parse::<UnitCode>() {
            return Ok(code);
        }
        self.default_scope
            .clone()
            .ok_or_else(|| format!("no crowd scope for field `{field}`"))
    }

    pub fn crowd(&self) -> &CrowdModel {
        &self.crowd
    }
}

impl SuggestionProvider for CrowdProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn suggest(&self, field: &str, term: &str, k: usize) -> Result<Vec<String>, String> {
        let scope = self.scope_for(field)?;
        Ok(self
            .crowd
            .suggestions(&scope, &normalize_term(term))
            .into_iter()
            .filter(|c| c.net_votes > 0)
            .take(k)
            .map(|c| c.term)
            .collect())
    }
}

/// Crowd terms blended ahead of embedding suggestions.
pub struct BlendProvider {
    name: String,
    embedding: EmbeddingProvider,
    crowd: CrowdProvider,
}

impl BlendProvider {
    pub fn new(name: impl Into<String>, embedding: EmbeddingProvider, crowd: CrowdProvider) -> Self {
        Self {
            name: name.into(),
            embedding,
            crowd,
        }
    }
}

impl SuggestionProvider for BlendProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn suggest(&self, field: &str, term: &str, k: usize) -> Result<Vec<String>, String> {
        let scope = self.crowd.scope_for(field)?;
        let crowd = self.crowd.crowd.suggestions(&scope, &normalize_term(term));
        let model = self.embedding.model_or_err(field)?;
        let request = ExpansionRequest::new([term]).with_k(k);
        let expansion = expand_with_crowd(model, &request, crowd).map_err(|e| e.to_string())?;
        Ok(expansion.suggestions.into_iter().map(|s| s.term).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crowd::{Direction, Vote, VoteStore};
    use crate::embedding::model::tests::toy_model;
    use crate::eval::{evaluate, parse_synset, score};

    fn model() -> Arc<EmbeddingModel> {
        Arc::new(toy_model(&[
            ("lens", &[1.0, 0.1, 0.0]),
            ("lenses", &[0.95, 0.2, 0.05]),
            ("optic", &[0.6, 0.8, 0.0]),
            ("fiber", &[0.2, 1.0, 0.1]),
            ("mirror", &[0.5, -0.5, 0.5]),
            ("laser", &[0.0, 0.3, 1.0]),
        ]))
    }

    fn code(s: &str) -> UnitCode {
        s.parse().unwrap()
    }

    #[test]
    fn embedding_provider_ranks_neighbors() {
        let p = EmbeddingProvider::new("emb", model());
        assert_eq!(p.suggest("optics", "lens", 2).unwrap(), ["lenses", "optic"]);
        assert!(p.suggest("optics", "zzz", 2).is_err());
        let scoped = EmbeddingProvider::scoped("s", BTreeMap::from([("optics".to_owned(), model())]), None);
        assert!(scoped.suggest("optics", "lens", 2).is_ok());
        assert!(scoped.suggest("biology", "lens", 2).is_err());
    }

    #[test]
    fn crowd_and_blend() {
        let store = VoteStore::in_memory();
        for (user, term, dir) in [
            ("a", "lenslet", Direction::Up),
            ("b", "lenslet", Direction::Up),
            ("a", "lenses", Direction::Down),
            ("a", "laser", Direction::Up),
        ] {
            store.record_vote(Vote::new(user, &code("1641"), "lens", term, dir)).unwrap();
        }
        let crowd = CrowdProvider::new("crowd", store.snapshot(), None).with_field_scope("optics", code("1641"));
        assert_eq!(crowd.suggest("optics", "lens", 5).unwrap(), ["lenslet", "laser"]);
        assert_eq!(crowd.suggest("1641", "Lens", 1).unwrap(), ["lenslet"]);
        assert!(crowd.suggest("biology", "lens", 5).is_err());

        let blended = BlendProvider::new("blend", EmbeddingProvider::new("emb", model()), crowd);
        let out = blended.suggest("optics", "lens", 4).unwrap();
        assert_eq!(out, ["lenslet", "laser", "optic", "mirror"]);
    }

    #[test]
    fn recall_grows_with_k() {
        let gold = parse_synset(
            "{\"field\":\"optics\",\"term\":\"lens\",\"equivalents\":[\"lenses\",\"mirror\",\"laser\"]}\n".as_bytes(),
        )
        .unwrap();
        let p = EmbeddingProvider::new("emb", model());
        let mut last_recall = 0.0;
        let mut last: Vec<String> = Vec::new();
        for k in 1..=5 {
            let pred = p.suggest("optics", "lens", k).unwrap();
            assert!(pred.starts_with(&last));
            let s = score(&pred, &gold.records[0].equivalents);
            assert!(s.recall >= last_recall);
            last_recall = s.recall;
            last = pred;
        }
        let report = evaluate(&p, &gold.records, 5).unwrap();
        assert_eq!(report.rows[0].scores.recall, 1.0);
    }
}
