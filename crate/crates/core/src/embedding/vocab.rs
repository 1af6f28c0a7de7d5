use std::collections::HashMap;

use super::{EmbeddingError, Result};
use crate::corpus::TokenStream;

/// Token counts ordered by descending count, ties by ascending token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    entries: Vec<(String, u64)>,
    index: HashMap<String, usize>,
}

/// Counts tokens across all documents and keeps those seen at least
/// `min_count` times.
pub fn build_vocab(streams: &TokenStream, min_count: u64) -> Result<Vocab> {
    if min_count == 0 {
        return Err(EmbeddingError::InvalidParams("min_count must be at least 1".into()));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for tok in streams.docs.iter().flatten() {
        *counts.entry(tok).or_default() += 1;
    }
    let entries: Vec<(String, u64)> = counts
        .into_iter()
        .filter(|&(_, count)| count >= min_count)
        .map(|(tok, count)| (tok.to_owned(), count))
        .collect();
    if entries.is_empty() {
        return Err(EmbeddingError::CorpusTooSmall { min_count });
    }
    Ok(Vocab::from_unsorted(entries))
}

impl Vocab {
    fn from_unsorted(mut entries: Vec<(String, u64)>) -> Self {
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (tok, _))| (tok.clone(), i))
            .collect();
        Vocab { entries, index }
    }

    /// Rebuilds a vocabulary from stored entries, which must already be in
    /// canonical order with unique tokens.
    pub fn from_entries(entries: Vec<(String, u64)>) -> Result<Self> {
        let ordered = entries
            .windows(2)
            .all(|w| w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
        if !ordered {
            return Err(EmbeddingError::Format(
                "vocabulary entries are not in canonical order".into(),
            ));
        }
        Ok(Self::from_unsorted(entries))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, idx: usize) -> &str {
        &self.entries[idx].0
    }

    pub fn count(&self, idx: usize) -> u64 {
        self.entries[idx].1
    }

    pub fn entries(&self) -> &[(String, u64)] {
        &self.entries
    }

    pub fn total_count(&self) -> u64 {
        self.entries.iter().map(|e| e.1).sum()
    }
}
