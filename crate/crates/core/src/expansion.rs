//! Centroid expansion: related terms for everything a user has selected so
//! far, taken as the nearest neighbors of the mean of the selected terms'
//! unit vectors.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{normalize_term, PHRASE_JOINER};
use crate::embedding::{EmbeddingError, EmbeddingModel};

pub const DEFAULT_K: usize = 20;

#[derive(Debug, Error)]
pub enum ExpansionError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no term is representable: {}", describe(.0))]
    NotRepresentable(Vec<SkippedTerm>),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

fn describe(skipped: &[SkippedTerm]) -> String {
    skipped
        .iter()
        .map(|s| format!("`{}` ({})", s.term, s.reason))
        .collect::<Vec<_>>()
        .join(", ")
}

/// A term left out of the centroid, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedTerm {
    pub term: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Embedding,
    Crowd,
    Manual,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Embedding => "embedding",
            Source::Crowd => "crowd",
            Source::Manual => "manual",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub term: String,
    pub score: f64,
    pub source: Source,
    pub net_votes: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpansionRequest {
    /// The original query term first, then the terms the user accepted.
    pub terms: Vec<String>,
    pub k: usize,
    /// Extra terms never to suggest.
    pub exclude: BTreeSet<String>,
}

impl ExpansionRequest {
    pub fn new<S: Into<String>>(terms: impl IntoIterator<Item = S>) -> Self {
        Self {
            terms: terms.into_iter().map(Into::into).collect(),
            k: DEFAULT_K,
            exclude: BTreeSet::new(),
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    /// Normalized terms, after checking the request is well formed.
    pub fn normalized_terms(&self) -> Result<Vec<String>, ExpansionError> {
        if self.terms.is_empty() {
            return Err(ExpansionError::InvalidRequest("terms must not be empty".into()));
        }
        if self.k == 0 {
            return Err(ExpansionError::InvalidRequest("k must be at least 1".into()));
        }
        let normalized: Vec<String> = self.terms.iter().map(|t| normalize_term(t)).collect();
        let mut seen = HashSet::new();
        for (raw, norm) in self.terms.iter().zip(&normalized) {
            if !norm.is_empty() && !seen.insert(norm) {
                return Err(ExpansionError::InvalidRequest(format!("duplicate term `{raw}`")));
            }
        }
        Ok(normalized)
    }
}

/// Result of [`centroid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Centroid {
    pub vector: Vec<f32>,
    /// Terms that contributed, in canonical (sorted) order.
    pub used: Vec<String>,
    pub skipped: Vec<SkippedTerm>,
}

/// Mean of the unit vectors of the representable terms.
///
/// Terms are normalized and accumulated in sorted order, so any permutation
/// of the input gives a bitwise identical vector. The mean is not
/// re-normalized; cosine ranking does not depend on its length.
pub fn centroid<S: AsRef<str>>(model: &EmbeddingModel, terms: &[S]) -> Result<Centroid, ExpansionError> {
    let mut canonical: Vec<(String, &str)> = terms
        .iter()
        .map(|t| (normalize_term(t.as_ref()), t.as_ref()))
        .collect();
    canonical.sort();
    canonical.dedup_by(|a, b| a.0 == b.0);

    let mut sum = vec![0.0f64; model.dim()];
    let mut used = Vec::new();
    let mut skipped = Vec::new();
    for (norm, raw) in canonical {
        if norm.is_empty() {
            skipped.push(SkippedTerm {
                term: raw.to_owned(),
                reason: "empty after normalization".into(),
            });
            continue;
        }
        match model.vector(&norm) {
            Ok(v) => {
                let len = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
                for (s, &x) in sum.iter_mut().zip(&v) {
                    *s += x as f64 / len;
                }
                used.push(norm);
            }
            Err(EmbeddingError::NotRepresentable { reason, .. }) => skipped.push(SkippedTerm {
                term: raw.to_owned(),
                reason,
            }),
            Err(other) => return Err(other.into()),
        }
    }
    if used.is_empty() {
        return Err(ExpansionError::NotRepresentable(skipped));
    }
    let n = used.len() as f64;
    Ok(Centroid {
        vector: sum.into_iter().map(|s| (s / n) as f32).collect(),
        used,
        skipped,
    })
}

/// Ranked suggestions for a request, plus the terms that were skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub suggestions: Vec<Suggestion>,
    pub skipped: Vec<SkippedTerm>,
}

/// Nearest neighbors of the centroid of `request.terms`.
///
/// The request's own terms, the explicit exclusions and their trivial
/// variants (case, space versus underscore) are never suggested.
pub fn expand(model: &EmbeddingModel, request: &ExpansionRequest) -> Result<Expansion, ExpansionError> {
    let terms = request.normalized_terms()?;
    let center = centroid(model, &terms)?;

    let exclude: HashSet<String> = terms
        .iter()
        .cloned()
        .chain(request.exclude.iter().map(|e| normalize_term(e)))
        .filter(|t| !t.is_empty())
        .flat_map(|t| [t.replace(' ', &PHRASE_JOINER.to_string()), t])
        .collect();

    // Cosine ranking is scale invariant, so a lone term queries with its
    // own vector and matches a direct neighbor lookup exactly.
    let query = match center.used.as_slice() {
        [only] => model.vector(only)?,
        _ => center.vector,
    };
    let suggestions = model
        .nearest(&query, request.k, &exclude)?
        .into_iter()
        .map(|n| Suggestion {
            term: n.token.replace(PHRASE_JOINER, " "),
            score: n.score,
            source: Source::Embedding,
            net_votes: 0,
        })
        .collect();
    Ok(Expansion {
        suggestions,
        skipped: center.skipped,
    })
}

/// Appends `accepted` to the request and expands again.
pub fn refine(
    model: &EmbeddingModel,
    prior: &ExpansionRequest,
    accepted: &str,
) -> Result<(ExpansionRequest, Expansion), ExpansionError> {
    let accepted_norm = normalize_term(accepted);
    if accepted_norm.is_empty() {
        return Err(ExpansionError::InvalidRequest("accepted term is empty".into()));
    }
    if prior.normalized_terms()?.contains(&accepted_norm) {
        return Err(ExpansionError::InvalidRequest(format!(
            "`{accepted}` is already selected"
        )));
    }
    model.vector(&accepted_norm)?;
    let mut next = prior.clone();
    next.terms.push(accepted.to_owned());
    let expansion = expand(model, &next)?;
    Ok((next, expansion))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::model::tests::toy_model;
    use proptest::prelude::*;

    fn optics() -> EmbeddingModel {
        toy_model(&[
            ("lens", &[1.0, 0.1, 0.0]),
            ("lenses", &[0.95, 0.2, 0.05]),
            ("optic", &[0.6, 0.8, 0.0]),
            ("fiber", &[0.2, 1.0, 0.1]),
            ("microlens", &[0.8, 0.0, 0.6]),
            ("lenslet", &[0.7, 0.1, 0.7]),
            ("mold", &[-1.0, 0.0, 0.2]),
            ("binding_assay", &[0.0, -1.0, 0.3]),
        ])
    }

    fn terms(s: &Expansion) -> Vec<&str> {
        s.suggestions.iter().map(|s| s.term.as_str()).collect()
    }

    #[test]
    fn singleton_centroid_is_unit_vector() {
        let model = optics();
        let c = centroid(&model, &["optic"]).unwrap();
        assert!((c.vector[0] - 0.6).abs() < 1e-7 && (c.vector[1] - 0.8).abs() < 1e-7);
        assert!(c.skipped.is_empty());
    }

    #[test]
    fn antipodal_terms_cancel() {
        let model = toy_model(&[("up", &[0.0, 2.0]), ("down", &[0.0, -1.0]), ("side", &[1.0, 0.0])]);
        let c = centroid(&model, &["up", "down"]).unwrap();
        assert!(c.vector.iter().all(|&x| x == 0.0));
        let err = expand(&model, &ExpansionRequest::new(["up", "down"])).unwrap_err();
        assert!(matches!(err, ExpansionError::Embedding(EmbeddingError::NotRepresentable { .. })));
    }

    #[test]
    fn centroid_reports_skipped_terms() {
        let model = optics();
        let c = centroid(&model, &["lens", "nanolens", "!!"]).unwrap();
        assert_eq!(c.used, ["lens"]);
        assert_eq!(c.skipped.len(), 2);
        match centroid(&model, &["nanolens"]) {
            Err(ExpansionError::NotRepresentable(s)) => assert_eq!(s[0].term, "nanolens"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn k1_picks_analytic_nearest() {
        let model = toy_model(&[("a", &[1.0, 0.0]), ("b", &[0.8, 0.6]), ("c", &[0.0, 1.0])]);
        // cos(a,b) = 0.8 > cos(a,c) = 0.
        let out = expand(&model, &ExpansionRequest::new(["a"]).with_k(1)).unwrap();
        assert_eq!(terms(&out), ["b"]);
        // Centroid of a and c is (0.5, 0.5): b scores 0.99, the others are excluded.
        let out = expand(&model, &ExpansionRequest::new(["a", "c"]).with_k(1)).unwrap();
        assert_eq!(terms(&out), ["b"]);
        assert!((out.suggestions[0].score - 1.4 / 2f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn singleton_reduces_to_nearest() {
        let model = optics();
        let out = expand(&model, &ExpansionRequest::new(["lens"])).unwrap();
        let v = model.vector("lens").unwrap();
        let direct = model.nearest(&v, DEFAULT_K, &["lens".to_string()].into()).unwrap();
        assert_eq!(out.suggestions.len(), direct.len());
        for (s, n) in out.suggestions.iter().zip(&direct) {
            assert_eq!(s.term, n.token.replace('_', " "));
            assert_eq!(s.score, n.score);
            assert_eq!(s.source, Source::Embedding);
        }
    }

    #[test]
    fn variants_are_excluded() {
        let model = optics();
        let mut req = ExpansionRequest::new(["Binding Assay"]);
        req.exclude.insert("LENSES".into());
        let out = expand(&model, &req).unwrap();
        assert!(!terms(&out).contains(&"binding assay"));
        assert!(!terms(&out).contains(&"lenses"));
        assert_eq!(out.suggestions.len(), 6);
    }

    #[test]
    fn invalid_requests() {
        let model = optics();
        assert!(matches!(
            expand(&model, &ExpansionRequest::new(Vec::<String>::new())),
            Err(ExpansionError::InvalidRequest(_))
        ));
        assert!(matches!(
            expand(&model, &ExpansionRequest::new(["lens", "LENS"])),
            Err(ExpansionError::InvalidRequest(_))
        ));
        assert!(matches!(
            expand(&model, &ExpansionRequest::new(["lens"]).with_k(0)),
            Err(ExpansionError::InvalidRequest(_))
        ));
    }

    #[test]
    fn refine_matches_expand() {
        let model = optics();
        let base = ExpansionRequest::new(["lens"]);
        let (next, refined) = refine(&model, &base, "optic").unwrap();
        assert_eq!(next.terms, ["lens", "optic"]);
        assert_eq!(refined, expand(&model, &ExpansionRequest::new(["lens", "optic"])).unwrap());
        // Dropping the accepted term again reproduces the original list.
        let mut back = next.clone();
        back.terms.pop();
        assert_eq!(expand(&model, &back).unwrap(), expand(&model, &base).unwrap());
        assert!(refine(&model, &next, "Optic").is_err());
        assert!(refine(&model, &base, "nanolens").is_err());
    }

    proptest! {
        #[test]
        fn permutation_invariance_and_prefix(perm in Just(vec!["lens", "optic", "microlens"]).prop_shuffle(), j in 1usize..6) {
            let model = optics();
            let canonical = expand(&model, &ExpansionRequest::new(["lens", "optic", "microlens"])).unwrap();
            let shuffled = expand(&model, &ExpansionRequest::new(perm.clone())).unwrap();
            prop_assert_eq!(&canonical, &shuffled);
            let short = expand(&model, &ExpansionRequest::new(perm.clone()).with_k(j)).unwrap();
            prop_assert_eq!(&short.suggestions[..], &canonical.suggestions[..j.min(canonical.suggestions.len())]);
            for s in &canonical.suggestions {
                prop_assert!(!perm.contains(&normalize_term(&s.term).as_str()));
            }
        }
    }
}
