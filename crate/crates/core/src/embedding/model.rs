use std::cmp::Ordering;
use std::collections::HashSet;

use super::{EmbeddingError, Result, SubwordIndex, TrainParams, Vocab};
use crate::corpus::{tokenize, FilterConfig, PHRASE_JOINER};
use crate::scope::Scope;

/// A ranked neighbor returned by [`EmbeddingModel::nearest`].
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub token: String,
    pub score: f64,
}

/// A trained (or loaded) embedding model. Immutable once built, so it can be
/// shared across threads and queried without locking.
#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    scope: Scope,
    params: TrainParams,
    filter: FilterConfig,
    vocab: Vocab,
    subwords: Option<SubwordIndex>,
    /// `(vocab + buckets) x dim`, row-major.
    input: Vec<f32>,
    /// `vocab x dim`; only present straight after training.
    output: Option<Vec<f32>>,
    /// Unit-normalized composed vectors of the vocabulary, `vocab x dim`.
    norm_cache: Vec<f32>,
    /// False for words whose composed vector is zero; they never appear as
    /// neighbors.
    representable: Vec<bool>,
}

impl EmbeddingModel {
    pub(crate) fn from_parts(
        scope: Scope,
        params: TrainParams,
        filter: FilterConfig,
        vocab: Vocab,
        input: Vec<f32>,
        output: Option<Vec<f32>>,
    ) -> Result<Self> {
        let subwords = params.subword_index();
        let rows = vocab.len() + subwords.map_or(0, |s| s.bucket);
        if input.len() != rows * params.dim {
            return Err(EmbeddingError::Format(format!(
                "expected {rows} x {} input values, got {}",
                params.dim,
                input.len()
            )));
        }
        let mut model = Self {
            scope,
            params,
            filter,
            vocab,
            subwords,
            input,
            output,
            norm_cache: Vec::new(),
            representable: Vec::new(),
        };
        model.rebuild_norm_cache()?;
        Ok(model)
    }

    fn rebuild_norm_cache(&mut self) -> Result<()> {
        let dim = self.params.dim;
        let mut cache = vec![0.0f32; self.vocab.len() * dim];
        let mut representable = vec![false; self.vocab.len()];
        for w in 0..self.vocab.len() {
            let v = self.word_vector(w);
            if v.iter().any(|x| !x.is_finite()) {
                return Err(EmbeddingError::Format(format!(
                    "non-finite vector for `{}`",
                    self.vocab.token(w)
                )));
            }
            let norm = l2_norm(&v);
            if norm > 0.0 {
                representable[w] = true;
                for (c, x) in cache[w * dim..(w + 1) * dim].iter_mut().zip(&v) {
                    *c = (*x as f64 / norm) as f32;
                }
            }
        }
        self.norm_cache = cache;
        self.representable = representable;
        Ok(())
    }

    pub fn with_scope(mut self, scope: Scope) -> Self {
        self.scope = scope;
        self
    }

    pub fn with_filter(mut self, filter: FilterConfig) -> Self {
        self.filter = filter;
        self
    }

    pub fn scope(&self) -> &Scope {
        &self.scope
    }

    pub fn params(&self) -> &TrainParams {
        &self.params
    }

    pub fn filter(&self) -> &FilterConfig {
        &self.filter
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    /// Raw input matrix: vocabulary rows, then bucket rows in subword mode.
    pub fn input_rows(&self) -> &[f32] {
        &self.input
    }

    pub fn output_rows(&self) -> Option<&[f32]> {
        self.output.as_deref()
    }

    pub fn unit_vector(&self, word: usize) -> Option<&[f32]> {
        let dim = self.params.dim;
        self.representable[word].then(|| &self.norm_cache[word * dim..(word + 1) * dim])
    }

    fn row(&self, row: usize) -> &[f32] {
        let dim = self.params.dim;
        &self.input[row * dim..(row + 1) * dim]
    }

    fn mean_of_rows(&self, rows: impl IntoIterator<Item = usize>) -> Vec<f32> {
        let mut acc = vec![0.0f64; self.params.dim];
        let mut n = 0usize;
        for r in rows {
            for (a, &x) in acc.iter_mut().zip(self.row(r)) {
                *a += x as f64;
            }
            n += 1;
        }
        acc.into_iter().map(|a| (a / n.max(1) as f64) as f32).collect()
    }

    fn bucket_rows<'a>(&'a self, token: &str, in_vocab: bool) -> impl Iterator<Item = usize> + 'a {
        let words = self.vocab.len();
        self.subwords
            .map(|index| index.slots(token, in_vocab))
            .unwrap_or_default()
            .into_iter()
            .map(move |slot| words + slot as usize)
    }

    /// Composed vector of a vocabulary word: its own row in word-only mode,
    /// the mean of its row and its n-gram buckets in subword mode.
    pub fn word_vector(&self, word: usize) -> Vec<f32> {
        if self.subwords.is_none() {
            return self.row(word).to_vec();
        }
        let token = self.vocab.token(word);
        self.mean_of_rows(std::iter::once(word).chain(self.bucket_rows(token, true)))
    }

    fn token_vector(&self, token: &str, term: &str) -> Result<Vec<f32>> {
        if let Some(w) = self.vocab.get(token) {
            return Ok(self.word_vector(w));
        }
        if self.subwords.is_none() {
            return Err(EmbeddingError::not_representable(
                term,
                format!("`{token}` is out of vocabulary"),
            ));
        }
        Ok(self.mean_of_rows(self.bucket_rows(token, false)))
    }

    /// Vector for a free-form term.
    ///
    /// A term whose words, joined by `_`, form a vocabulary token (a detected
    /// phrase) maps to that token. Otherwise the term is tokenized with the
    /// model's filter configuration and the per-token vectors are averaged;
    /// out-of-vocabulary tokens are built from their n-grams in subword mode.
    pub fn vector(&self, term: &str) -> Result<Vec<f32>> {
        let joined = term
            .split_whitespace()
            .map(str::to_ascii_lowercase)
            .collect::<Vec<_>>()
            .join(&PHRASE_JOINER.to_string());
        let v = if let Some(w) = self.vocab.get(&joined) {
            self.word_vector(w)
        } else {
            let tokens = tokenize(term, &self.filter);
            if tokens.is_empty() {
                return Err(EmbeddingError::not_representable(term, "no tokens after normalization"));
            }
            let parts = tokens
                .iter()
                .map(|tok| self.token_vector(tok, term))
                .collect::<Result<Vec<_>>>()?;
            if parts.len() == 1 {
                parts.into_iter().next().expect("one part")
            } else {
                let n = parts.len() as f64;
                (0..self.params.dim)
                    .map(|i| (parts.iter().map(|p| p[i] as f64).sum::<f64>() / n) as f32)
                    .collect()
            }
        };
        if v.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::not_representable(term, "non-finite vector"));
        }
        if v.iter().all(|&x| x == 0.0) {
            return Err(EmbeddingError::not_representable(term, "zero vector"));
        }
        Ok(v)
    }

    /// Exact cosine nearest neighbors of `query` over the vocabulary.
    ///
    /// Ranked by descending score, ties by ascending token; at most `k`
    /// results. Tokens in `exclude` and zero-vector words are skipped.
    pub fn nearest(&self, query: &[f32], k: usize, exclude: &HashSet<String>) -> Result<Vec<Neighbor>> {
        if k == 0 {
            return Err(EmbeddingError::InvalidParams("k must be at least 1".into()));
        }
        if query.len() != self.params.dim {
            return Err(EmbeddingError::InvalidParams(format!(
                "query has {} components, model has {}",
                query.len(),
                self.params.dim
            )));
        }
        let norm = l2_norm(query);
        if !norm.is_finite() || norm == 0.0 {
            return Err(EmbeddingError::not_representable("<query>", "zero or non-finite query vector"));
        }
        let unit: Vec<f64> = query.iter().map(|&x| x as f64 / norm).collect();
        let dim = self.params.dim;

        let mut scored: Vec<(f64, usize)> = (0..self.vocab.len())
            .filter(|&w| self.representable[w] && !exclude.contains(self.vocab.token(w)))
            .map(|w| {
                let row = &self.norm_cache[w * dim..(w + 1) * dim];
                let s: f64 = row.iter().zip(&unit).map(|(&a, &b)| a as f64 * b).sum();
                (s.clamp(-1.0, 1.0), w)
            })
            .collect();

        let cmp = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
            b.0.total_cmp(&a.0)
                .then_with(|| self.vocab.token(a.1).cmp(self.vocab.token(b.1)))
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);

        Ok(scored
            .into_iter()
            .map(|(score, w)| Neighbor {
                token: self.vocab.token(w).to_owned(),
                score,
            })
            .collect())
    }
}

pub(crate) fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}
