use serde::{Deserialize, Serialize};

/// Hashes character n-grams of `<token>` into a fixed number of buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubwordIndex {
    pub minn: usize,
    pub maxn: usize,
    pub bucket: usize,
}

/// 32-bit FNV-1a over the bytes of `s`.
pub fn fnv1a_32(s: &str) -> u32 {
    s.bytes().fold(0x811c_9dc5_u32, |hash, byte| {
        (hash ^ u32::from(byte)).wrapping_mul(0x0100_0193)
    })
}

impl SubwordIndex {
    pub fn new(minn: usize, maxn: usize, bucket: usize) -> Self {
        Self { minn, maxn, bucket }
    }

    /// Character n-grams of `<token>` with lengths in `minn..=maxn`, ordered
    /// by length and then start position. The bracketed token itself is left
    /// out when `in_vocab`, since the word row already represents it.
    pub fn ngrams(&self, token: &str, in_vocab: bool) -> Vec<String> {
        let chars: Vec<char> = std::iter::once('<')
            .chain(token.chars())
            .chain(std::iter::once('>'))
            .collect();
        let mut grams = Vec::new();
        for n in self.minn..=self.maxn.min(chars.len()) {
            if n == chars.len() && in_vocab {
                continue;
            }
            for start in 0..=chars.len() - n {
                grams.push(chars[start..start + n].iter().collect());
            }
        }
        grams
    }

    /// Bucket slots for the n-grams of `token`, each in `0..bucket`.
    pub fn slots(&self, token: &str, in_vocab: bool) -> Vec<u32> {
        self.ngrams(token, in_vocab)
            .iter()
            .map(|gram| (fnv1a_32(gram) as u64 % self.bucket as u64) as u32)
            .collect()
    }
}
