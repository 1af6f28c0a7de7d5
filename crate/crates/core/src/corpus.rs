//! Corpus ingestion and text normalization.
//!
//! Documents arrive as JSON lines tagged with their organizational units and
//! classification codes. [`ingest`] keeps the ones matching a [`Scope`];
//! [`tokenize`] turns text into lowercase ASCII tokens, and
//! [`detect_phrases`] optionally glues strong collocations into multiword
//! tokens (`binding_assay`).

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{self, BufRead, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scope::{Scope, UnitCode};

/// Separator between the words of a multiword token.
pub const PHRASE_JOINER: char = '_';

/// Longest phrase, in words, that [`detect_phrases`] will build.
pub const MAX_PHRASE_WORDS: usize = 3;

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

const NUCLEOTIDES: &[u8] = b"acgtu";
const AMINO_ACIDS: &[u8] = b"acdefghiklmnpqrstvwy";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
    #[error("invalid filter configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub art_unit: Option<UnitCode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workgroup: Option<UnitCode>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cpc: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<NaiveDate>,
}

impl Document {
    /// Scope membership. A document without unit or classification tags only
    /// belongs to the generic scope. An explicit `workgroup` tag is taken at
    /// face value; otherwise an art unit belongs to the workgroup sharing its
    /// first three digits.
    pub fn matches(&self, scope: &Scope) -> bool {
        match scope {
            Scope::Generic => true,
            Scope::Workgroup(wg) => {
                self.workgroup.as_ref() == Some(wg)
                    || self.art_unit.as_ref().is_some_and(|au| au.within(wg))
            }
            Scope::ArtUnit(au) => self.art_unit.as_ref() == Some(au),
            Scope::Cpc(prefix) => self.cpc.iter().any(|code| code.starts_with(prefix.as_str())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub scope: Scope,
    pub documents: Vec<Document>,
}

impl Corpus {
    /// Tokenizes every document and, when configured, joins phrases.
    pub fn tokenize(&self, config: &FilterConfig) -> TokenStream {
        let docs = self
            .documents
            .iter()
            .map(|doc| tokenize(&doc.text, config))
            .collect();
        let stream = TokenStream { docs };
        if config.phrase_passes > 0 {
            detect_phrases(&stream, config)
        } else {
            stream
        }
    }
}

/// Outcome of [`ingest`]: the scoped corpus plus record accounting.
#[derive(Debug)]
pub struct Ingested {
    pub corpus: Corpus,
    pub report: IngestReport,
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct IngestReport {
    pub accepted: usize,
    pub out_of_scope: usize,
    /// Records skipped in lenient mode, as `(line, reason)`.
    pub rejected: Vec<(usize, String)>,
}

/// Reads Corpus JSONL and keeps the documents matching `scope`, in input
/// order. In strict mode the first bad record (malformed JSON, empty id,
/// duplicate id) aborts with its line number; in lenient mode it is skipped
/// and listed in the report.
pub fn ingest<R: BufRead>(source: R, scope: &Scope, lenient: bool) -> Result<Ingested, CorpusError> {
    let mut seen = HashSet::new();
    let mut documents = Vec::new();
    let mut report = IngestReport::default();

    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Document>(&line)
            .map_err(|e| e.to_string())
            .and_then(|doc| {
                if doc.id.trim().is_empty() {
                    Err("document id is empty".to_owned())
                } else if !seen.insert(doc.id.clone()) {
                    Err(format!("duplicate document id `{}`", doc.id))
                } else {
                    Ok(doc)
                }
            });
        match parsed {
            Ok(doc) if doc.matches(scope) => {
                report.accepted += 1;
                documents.push(doc);
            }
            Ok(_) => report.out_of_scope += 1,
            Err(message) if lenient => report.rejected.push((line_no, message)),
            Err(message) => return Err(CorpusError::Record { line: line_no, message }),
        }
    }

    Ok(Ingested {
        corpus: Corpus {
            scope: scope.clone(),
            documents,
        },
        report,
    })
}

/// Per-document token sequences ready for vocabulary building and training.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenStream {
    pub docs: Vec<Vec<String>>,
}

impl TokenStream {
    pub fn new(docs: Vec<Vec<String>>) -> Self {
        Self { docs }
    }

    pub fn total_tokens(&self) -> usize {
        self.docs.iter().map(Vec::len).sum()
    }

    /// One document per line, tokens separated by single spaces.
    pub fn read_lines<R: BufRead>(reader: R) -> io::Result<Self> {
        let mut docs = Vec::new();
        for line in reader.lines() {
            docs.push(line?.split_whitespace().map(str::to_owned).collect());
        }
        Ok(Self { docs })
    }

    pub fn write_lines<W: Write>(&self, mut writer: W) -> io::Result<()> {
        for doc in &self.docs {
            writeln!(writer, "{}", doc.join(" "))?;
        }
        writer.flush()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub stopwords: BTreeSet<String>,
    /// Minimum length for a token to be considered a biological sequence.
    pub bio_min_len: usize,
    pub drop_numeric: bool,
    pub phrase_passes: u8,
    pub phrase_threshold: f64,
    pub phrase_discount: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            stopwords: parse_stopwords(DEFAULT_STOPWORDS),
            bio_min_len: 12,
            drop_numeric: true,
            phrase_passes: 0,
            phrase_threshold: 10.0,
            phrase_discount: 5,
        }
    }
}

impl FilterConfig {
    /// Configuration used to normalize individual terms (votes, gold sets,
    /// suggestion matching): the same character pipeline with no token
    /// dropped.
    pub fn term_normalization() -> Self {
        Self {
            stopwords: BTreeSet::new(),
            bio_min_len: usize::MAX,
            drop_numeric: false,
            phrase_passes: 0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.bio_min_len < 2 {
            return Err(CorpusError::Config("bio_min_len must be at least 2".into()));
        }
        if !(self.phrase_threshold.is_finite() && self.phrase_threshold > 0.0) {
            return Err(CorpusError::Config(
                "phrase_threshold must be finite and positive".into(),
            ));
        }
        if self.phrase_passes > 2 {
            return Err(CorpusError::Config("phrase_passes must be 0, 1 or 2".into()));
        }
        Ok(())
    }
}

/// Parses a stop-word file: one token per line, `#` starts a comment line.
pub fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|line| !line.is_empty() && !line.starts_with('#'))
        .map(str::to_ascii_lowercase)
        .collect()
}

/// Splits text into normalized tokens.
///
/// Non-ASCII code points are removed and act as token boundaries, text is
/// lowercased, everything outside `[a-z0-9-]` becomes a space, then
/// stop-words, numeric tokens and biological sequences are dropped.
pub fn tokenize(text: &str, config: &FilterConfig) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .map(|c| {
            let c = c.to_ascii_lowercase();
            if c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-' {
                c
            } else {
                ' '
            }
        })
        .collect();

    let tokens = cleaned
        .split_whitespace()
        .filter(|tok| !tok.bytes().all(|b| b == b'-'))
        .filter(|tok| !config.stopwords.contains(*tok))
        .filter(|tok| !(config.drop_numeric && is_numeric(tok)))
        .map(str::to_owned)
        .collect();

    filter_special(tokens, config)
}

/// Normalizes a free-form term to its canonical, space-joined form.
pub fn normalize_term(term: &str) -> String {
    tokenize(term, &FilterConfig::term_normalization()).join(" ")
}

fn is_numeric(token: &str) -> bool {
    token.bytes().any(|b| b.is_ascii_digit()) && token.bytes().all(|b| b.is_ascii_digit() || b == b'-')
}

/// Drops tokens that look like nucleotide or amino-acid sequences.
pub fn filter_special(tokens: Vec<String>, config: &FilterConfig) -> Vec<String> {
    tokens
        .into_iter()
        .filter(|tok| !is_bio_sequence(tok, config.bio_min_len))
        .collect()
}

fn is_bio_sequence(token: &str, min_len: usize) -> bool {
    token.len() >= min_len
        && (token.bytes().all(|b| NUCLEOTIDES.contains(&b))
            || token.bytes().all(|b| AMINO_ACIDS.contains(&b)))
}

/// Joins adjacent tokens whose collocation score exceeds the threshold.
///
/// The score of a pair is `(count(a,b) - discount) * N / (count(a) * count(b))`
/// with `N` the total token count. Each pass recounts and joins greedily from
/// the left; a token takes part in at most one join per pass and phrases
/// never grow beyond [`MAX_PHRASE_WORDS`] words.
pub fn detect_phrases(streams: &TokenStream, config: &FilterConfig) -> TokenStream {
    let mut current = streams.clone();
    for _ in 0..config.phrase_passes {
        current = phrase_pass(&current, config);
    }
    current
}

fn phrase_pass(stream: &TokenStream, config: &FilterConfig) -> TokenStream {
    let mut unigrams: HashMap<&str, u64> = HashMap::new();
    let mut bigrams: HashMap<(&str, &str), u64> = HashMap::new();
    for doc in &stream.docs {
        for tok in doc {
            *unigrams.entry(tok).or_default() += 1;
        }
        for pair in doc.windows(2) {
            *bigrams.entry((&pair[0], &pair[1])).or_default() += 1;
        }
    }
    let total = stream.total_tokens() as f64;
    let discount = config.phrase_discount as f64;

    let score = |a: &str, b: &str| -> f64 {
        let joint = bigrams.get(&(a, b)).copied().unwrap_or(0) as f64;
        (joint - discount) * total / (unigrams[a] as f64 * unigrams[b] as f64)
    };
    let word_count = |tok: &str| tok.split(PHRASE_JOINER).count();

    let docs = stream
        .docs
        .iter()
        .map(|doc| {
            let mut out = Vec::with_capacity(doc.len());
            let mut i = 0;
            while i < doc.len() {
                if i + 1 < doc.len() {
                    let (a, b) = (&doc[i], &doc[i + 1]);
                    if word_count(a) + word_count(b) <= MAX_PHRASE_WORDS
                        && score(a, b) > config.phrase_threshold
                    {
                        out.push(format!("{a}{PHRASE_JOINER}{b}"));
                        i += 2;
                        continue;
                    }
                }
                out.push(doc[i].clone());
                i += 1;
            }
            out
        })
        .collect();
    TokenStream { docs }
}
