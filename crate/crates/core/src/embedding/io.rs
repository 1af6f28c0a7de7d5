//! On-disk model format.
//!
//! A model directory holds `model.meta.json` (scope, parameters, filter
//! configuration, vocabulary counts and a checksum of the vector file) and
//! `model.vec`, a text matrix in the usual word-vector layout: a
//! `<rows> <dim>` header, then `token v1 … vdim` per row. Vocabulary rows
//! come first; in subword mode bucket rows follow with token `#<slot>`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EmbeddingError, EmbeddingModel, Result, TrainParams, Vocab};
use crate::corpus::FilterConfig;
use crate::scope::Scope;

pub const META_FILE: &str = "model.meta.json";
pub const VEC_FILE: &str = "model.vec";

const FORMAT_MAGIC: &str = "patexpand-model";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    format: String,
    version: u32,
    scope: Scope,
    params: TrainParams,
    filter: FilterConfig,
    vocab_size: usize,
    rows: usize,
    dim: usize,
    checksum: String,
    counts: Vec<u64>,
}

fn checksum(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

fn format_err(msg: impl Into<String>) -> EmbeddingError {
    EmbeddingError::Format(msg.into())
}

/// Writes the model into `dir`, creating it if needed.
pub fn save(model: &EmbeddingModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let dim = model.dim();
    let words = model.vocab().len();
    let values = model.input_rows();
    let rows = values.len() / dim;

    let mut text = String::with_capacity(rows * (dim * 16 + 16));
    writeln!(text, "{rows} {dim}").expect("writing to a String");
    for (r, row) in values.chunks(dim).enumerate() {
        if r < words {
            text.push_str(model.vocab().token(r));
        } else {
            write!(text, "#{}", r - words).expect("writing to a String");
        }
        for x in row {
            // Nine significant digits round-trip any f32 exactly.
            write!(text, " {x:.8e}").expect("writing to a String");
        }
        text.push('\n');
    }

    let meta = Meta {
        format: FORMAT_MAGIC.to_owned(),
        version: FORMAT_VERSION,
        scope: model.scope().clone(),
        params: model.params().clone(),
        filter: model.filter().clone(),
        vocab_size: words,
        rows,
        dim,
        checksum: checksum(text.as_bytes()),
        counts: model.vocab().entries().iter().map(|e| e.1).collect(),
    };
    fs::write(dir.join(VEC_FILE), text.as_bytes())?;
    let meta_json = serde_json::to_string_pretty(&meta).map_err(|e| format_err(e.to_string()))?;
    fs::write(dir.join(META_FILE), meta_json)?;
    Ok(())
}

/// Loads a model directory written by [`save`].
pub fn load(dir: &Path) -> Result<EmbeddingModel> {
    let meta_text = fs::read_to_string(dir.join(META_FILE))?;
    let probe: serde_json::Value =
        serde_json::from_str(&meta_text).map_err(|e| format_err(format!("metadata is not valid JSON: {e}")))?;
    if probe.get("format").and_then(|f| f.as_str()) != Some(FORMAT_MAGIC) {
        return Err(format_err("bad header magic: not a patexpand model"));
    }
    let version = probe.get("version").and_then(|v| v.as_u64());
    if version != Some(FORMAT_VERSION as u64) {
        return Err(format_err(format!(
            "version mismatch: file has {version:?}, expected {FORMAT_VERSION}"
        )));
    }
    let meta: Meta = serde_json::from_value(probe).map_err(|e| format_err(format!("bad metadata: {e}")))?;

    let bytes = fs::read(dir.join(VEC_FILE))?;
    if checksum(&bytes) != meta.checksum {
        return Err(format_err("checksum mismatch: vector file is corrupted or truncated"));
    }
    let text = std::str::from_utf8(&bytes).map_err(|_| format_err("vector file is not UTF-8"))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| format_err("truncated: missing header line"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| format_err(format!("bad header `{header}`"))))
        .collect::<Result<_>>()?;
    if dims != [meta.rows, meta.dim] {
        return Err(format_err(format!(
            "header `{header}` disagrees with metadata ({} x {})",
            meta.rows, meta.dim
        )));
    }
    if meta.counts.len() != meta.vocab_size || meta.vocab_size > meta.rows {
        return Err(format_err("vocabulary size disagrees with stored counts"));
    }

    let mut tokens = Vec::with_capacity(meta.vocab_size);
    let mut values = Vec::with_capacity(meta.rows * meta.dim);
    for r in 0..meta.rows {
        let line = lines
            .next()
            .ok_or_else(|| format_err(format!("truncated: expected {} rows, found {r}", meta.rows)))?;
        let mut fields = line.split(' ');
        let token = fields.next().unwrap_or_default();
        if r < meta.vocab_size {
            tokens.push(token.to_owned());
        } else if token != format!("#{}", r - meta.vocab_size) {
            return Err(format_err(format!("row {}: expected bucket label, found `{token}`", r + 2)));
        }
        let before = values.len();
        for field in fields {
            let x: f32 = field
                .parse()
                .map_err(|_| format_err(format!("row {}: bad number `{field}`", r + 2)))?;
            values.push(x);
        }
        if values.len() - before != meta.dim {
            return Err(format_err(format!(
                "row {}: expected {} values, found {}",
                r + 2,
                meta.dim,
                values.len() - before
            )));
        }
    }
    if lines.next().is_some_and(|l| !l.is_empty()) {
        return Err(format_err("trailing data after the last row"));
    }

    let vocab = Vocab::from_entries(tokens.into_iter().zip(meta.counts).collect())?;
    EmbeddingModel::from_parts(meta.scope, meta.params, meta.filter, vocab, values, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TokenStream;
    use crate::embedding::{train, TrainParams};
    use std::collections::HashSet;

    fn trained(subword: bool) -> EmbeddingModel {
        let words = ["alpha", "beta", "gamma", "delta", "omega", "sigma", "kappa"];
        let docs = (0..30)
            .map(|i| (0..7).map(|j| words[(i + j * j) % 7].to_owned()).collect())
            .collect();
        let params = TrainParams {
            dim: 6,
            epochs: 1,
            min_count: 1,
            subsample_t: 1.0,
            subword_mode: subword,
            bucket: 40,
            minn: 2,
            maxn: 3,
            ..TrainParams::default()
        };
        train(&TokenStream::new(docs), &params)
            .unwrap()
            .with_scope("art_unit:1641".parse().unwrap())
    }

    fn rankings(model: &EmbeddingModel) -> Vec<Vec<String>> {
        (0..model.vocab().len())
            .map(|w| {
                let v = model.word_vector(w);
                model
                    .nearest(&v, 5, &HashSet::new())
                    .unwrap()
                    .into_iter()
                    .map(|n| n.token)
                    .collect()
            })
            .collect()
    }

    #[test]
    fn round_trip_preserves_vectors_and_rankings() {
        for subword in [false, true] {
            let model = trained(subword);
            let dir = tempfile::tempdir().unwrap();
            save(&model, dir.path()).unwrap();
            let loaded = load(dir.path()).unwrap();
            assert_eq!(loaded.scope(), model.scope());
            assert_eq!(loaded.vocab(), model.vocab());
            assert_eq!(loaded.params(), model.params());
            for w in 0..model.vocab().len() {
                let (a, b) = (model.word_vector(w), loaded.word_vector(w));
                assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-6));
            }
            assert_eq!(rankings(&model), rankings(&loaded));
            if subword {
                let (a, b) = (model.vector("alphabet").unwrap(), loaded.vector("alphabet").unwrap());
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn save_is_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        save(&trained(false), a.path()).unwrap();
        save(&trained(false), b.path()).unwrap();
        assert_eq!(
            fs::read(a.path().join(VEC_FILE)).unwrap(),
            fs::read(b.path().join(VEC_FILE)).unwrap()
        );
    }

    fn expect_format_error(dir: &Path, needle: &str) {
        match load(dir) {
            Err(EmbeddingError::Format(msg)) => assert!(msg.contains(needle), "{msg}"),
            other => panic!("expected format error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn detects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        save(&trained(false), dir.path()).unwrap();
        let meta_path = dir.path().join(META_FILE);
        let vec_path = dir.path().join(VEC_FILE);
        let meta = fs::read_to_string(&meta_path).unwrap();
        let vec = fs::read(&vec_path).unwrap();

        fs::write(&meta_path, meta.replace(FORMAT_MAGIC, "word2vec")).unwrap();
        expect_format_error(dir.path(), "magic");

        fs::write(&meta_path, meta.replace("\"version\": 1", "\"version\": 9")).unwrap();
        expect_format_error(dir.path(), "version mismatch");

        fs::write(&meta_path, &meta).unwrap();
        fs::write(&vec_path, &vec[..vec.len() / 2]).unwrap();
        expect_format_error(dir.path(), "checksum");

        // A consistent but truncated pair: fix the checksum for the short file.
        let short = &vec[..vec.iter().rposition(|&b| b == b'\n').unwrap()];
        let short = &short[..short.iter().rposition(|&b| b == b'\n').unwrap() + 1];
        fs::write(&vec_path, short).unwrap();
        let old_sum = checksum(&vec);
        fs::write(&meta_path, meta.replace(&old_sum, &checksum(short))).unwrap();
        expect_format_error(dir.path(), "truncated");
    }
}
