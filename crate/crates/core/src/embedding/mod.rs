//! Skip-gram negative-sampling embeddings with optional hashed subwords.
//!
//! [`train`] learns vectors from a [`TokenStream`](crate::corpus::TokenStream);
//! the resulting [`EmbeddingModel`] composes vectors for arbitrary terms and
//! answers exact cosine nearest-neighbor queries.

mod io;
pub(crate) mod model;
pub mod sgns;
mod subword;
mod train;
mod vocab;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::io::{load, save, META_FILE, VEC_FILE};
pub use self::model::{EmbeddingModel, Neighbor};
pub use self::subword::{fnv1a_32, SubwordIndex};
pub use self::train::train;
pub use self::vocab::{build_vocab, Vocab};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("corpus too small for min_count {min_count}: no token survives")]
    CorpusTooSmall { min_count: u64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("training diverged: non-finite loss at step {step} (lr {lr})")]
    NonFinite { step: u64, lr: f64 },
    #[error("`{term}` is not representable: {reason}")]
    NotRepresentable { term: String, reason: String },
    #[error("model file error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EmbeddingError {
    pub(crate) fn not_representable(term: &str, reason: impl Into<String>) -> Self {
        EmbeddingError::NotRepresentable {
            term: term.to_owned(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = EmbeddingError> = std::result::Result<T, E>;

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Starting learning rate; decays linearly with processed tokens.
    pub initial_lr: f64,
    pub min_count: u64,
    pub subsample_t: f64,
    pub subword_mode: bool,
    pub minn: usize,
    pub maxn: usize,
    pub bucket: usize,
    pub seed: u64,
    /// Worker threads. One thread is bitwise deterministic; more threads
    /// update vectors without synchronization.
    pub threads: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            initial_lr: 0.05,
            min_count: 5,
            subsample_t: 1e-4,
            subword_mode: false,
            minn: 1,
            maxn: 6,
            bucket: 2_000_000,
            seed: 1,
            threads: 1,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(EmbeddingError::InvalidParams(msg.to_owned()));
        if self.dim == 0 {
            return fail("dim must be at least 1");
        }
        if self.window == 0 {
            return fail("window must be at least 1");
        }
        if self.negatives == 0 {
            return fail("negatives must be at least 1");
        }
        if self.min_count == 0 {
            return fail("min_count must be at least 1");
        }
        if self.minn == 0 || self.minn > self.maxn {
            return fail("subword lengths must satisfy 0 < minn <= maxn");
        }
        if self.bucket == 0 || self.bucket > u32::MAX as usize {
            return fail("bucket must be in 1..=u32::MAX");
        }
        if self.threads == 0 {
            return fail("threads must be at least 1");
        }
        if !(self.initial_lr.is_finite() && self.initial_lr > 0.0) {
            return fail("initial_lr must be finite and positive");
        }
        if !(self.subsample_t.is_finite() && self.subsample_t > 0.0) {
            return fail("subsample_t must be finite and positive");
        }
        Ok(())
    }

    pub(crate) fn subword_index(&self) -> Option<SubwordIndex> {
        self.subword_mode
            .then(|| SubwordIndex::new(self.minn, self.maxn, self.bucket))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_params_are_valid() {
        let params = TrainParams::default();
        params.validate().unwrap();
        assert_eq!(params.min_count, 5);
        assert_eq!(params.bucket, 2_000_000);
        assert_eq!(params.minn, 1);
    }

    #[test]
    fn rejects_bad_params() {
        for bad in [
            TrainParams { dim: 0, ..Default::default() },
            TrainParams { window: 0, ..Default::default() },
            TrainParams { negatives: 0, ..Default::default() },
            TrainParams { minn: 4, maxn: 3, ..Default::default() },
            TrainParams { minn: 0, ..Default::default() },
            TrainParams { bucket: 0, ..Default::default() },
            TrainParams { initial_lr: f64::INFINITY, ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }
}
