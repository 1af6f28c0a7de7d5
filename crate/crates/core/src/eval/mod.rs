//! Precision, recall and F1 of suggestion providers against gold synonym
//! sets, with CSV comparison tables.

mod providers;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::normalize_term;

pub use providers::{BlendProvider, CrowdProvider, EmbeddingProvider, GoldOracle};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("synset line {line}: {message}")]
    Synset { line: usize, message: String },
    #[error("reports disagree on k ({0} vs {1})")]
    MismatchedK(usize, usize),
    #[error("k must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A head term and the alternates experts accept for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynRecord {
    pub field: String,
    pub term: String,
    pub equivalents: BTreeSet<String>,
}

/// Loaded gold records plus any normalization warnings.
#[derive(Debug, Clone, Default)]
pub struct Synset {
    pub records: Vec<SynRecord>,
    pub warnings: Vec<String>,
}

impl Synset {
    pub fn fields(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.field.as_str()).collect()
    }

    pub fn for_field(&self, field: &str) -> Vec<SynRecord> {
        self.records.iter().filter(|r| r.field == field).cloned().collect()
    }
}

pub fn load_synset(path: &Path) -> Result<Synset, EvalError> {
    parse_synset(BufReader::new(File::open(path)?))
}

/// Parses gold JSONL (`{"field":…,"term":…,"equivalents":[…]}` per line).
///
/// Terms and equivalents are normalized; a head term listed among its own
/// equivalents is dropped with a warning.
pub fn parse_synset<R: BufRead>(reader: R) -> Result<Synset, EvalError> {
    #[derive(Deserialize)]
    struct Raw {
        field: String,
        term: String,
        equivalents: Vec<String>,
    }

    let mut out = Synset::default();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| EvalError::Synset { line: line_no, message };
        let raw: Raw = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        let field = raw.field.trim().to_owned();
        let term = normalize_term(&raw.term);
        if field.is_empty() || term.is_empty() {
            return Err(err("field and term must not be empty".into()));
        }
        if !seen.insert((field.clone(), term.clone())) {
            return Err(err(format!("duplicate record for ({field}, {term})")));
        }
        let mut equivalents: BTreeSet<String> = raw
            .equivalents
            .iter()
            .map(|e| normalize_term(e))
            .filter(|e| !e.is_empty())
            .collect();
        if equivalents.remove(&term) {
            out.warnings
                .push(format!("line {line_no}: `{term}` listed as its own equivalent; dropped"));
        }
        if equivalents.is_empty() {
            return Err(err(format!("`{term}` has no equivalents")));
        }
        out.records.push(SynRecord { field, term, equivalents });
    }
    Ok(out)
}

/// Anything that proposes ranked related terms for a head term.
pub trait SuggestionProvider {
    fn name(&self) -> &str;

    /// Up to `k` suggestions, best first. `field` names the gold record's
    /// technology area so scoped providers can route the query.
    fn suggest(&self, field: &str, term: &str, k: usize) -> Result<Vec<String>, String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub pred_count: usize,
    pub gold_count: usize,
    pub hits: usize,
}

/// Set-based P/R/F1 of normalized predictions against normalized gold.
/// Predictions are normalized and de-duplicated first.
pub fn score(pred: &[String], gold: &BTreeSet<String>) -> Scores {
    let mut seen = HashSet::new();
    let pred: Vec<String> = pred
        .iter()
        .map(|p| normalize_term(p))
        .filter(|p| !p.is_empty() && seen.insert(p.clone()))
        .collect();
    let hits = pred.iter().filter(|p| gold.contains(*p)).count();
    let precision = if pred.is_empty() { 0.0 } else { hits as f64 / pred.len() as f64 };
    let recall = if gold.is_empty() { 0.0 } else { hits as f64 / gold.len() as f64 };
    Scores {
        precision,
        recall,
        f1: f1(precision, recall),
        pred_count: pred.len(),
        gold_count: gold.len(),
        hits,
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub provider: String,
    pub field: String,
    pub term: String,
    pub k: usize,
    #[serde(flatten)]
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MacroRow {
    pub provider: String,
    pub field: String,
    pub k: usize,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub terms: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub provider: String,
    pub field: String,
    pub term: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub k: usize,
    pub rows: Vec<EvalRow>,
    pub macro_rows: Vec<MacroRow>,
    pub failures: Vec<Failure>,
}

impl EvalReport {
    pub fn macro_f1(&self, field: &str) -> Option<f64> {
        self.macro_rows.iter().find(|m| m.field == field).map(|m| m.macro_f1)
    }
}

/// Scores `provider` on every record at cutoff `k`.
///
/// A provider error on one term marks that row failed: it is listed in
/// `failures` and left out of the macro averages.
pub fn evaluate(provider: &dyn SuggestionProvider, synset: &[SynRecord], k: usize) -> Result<EvalReport, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidK);
    }
    let name = provider.name().to_owned();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for record in synset {
        match provider.suggest(&record.field, &record.term, k) {
            Ok(mut pred) => {
                pred.truncate(k);
                rows.push(EvalRow {
                    provider: name.clone(),
                    field: record.field.clone(),
                    term: record.term.clone(),
                    k,
                    scores: score(&pred, &record.equivalents),
                });
            }
            Err(error) => failures.push(Failure {
                provider: name.clone(),
                field: record.field.clone(),
                term: record.term.clone(),
                error,
            }),
        }
    }
    let macro_rows = macro_average(&rows, k);
    Ok(EvalReport {
        k,
        rows,
        macro_rows,
        failures,
    })
}

fn macro_average(rows: &[EvalRow], k: usize) -> Vec<MacroRow> {
    let mut groups: BTreeMap<(&str, &str), Vec<&Scores>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.provider.as_str(), row.field.as_str()))
            .or_default()
            .push(&row.scores);
    }
    groups
        .into_iter()
        .map(|((provider, field), scores)| {
            let n = scores.len() as f64;
            let mean = |f: fn(&Scores) -> f64| scores.iter().map(|s| f(s)).sum::<f64>() / n;
            MacroRow {
                provider: provider.to_owned(),
                field: field.to_owned(),
                k,
                macro_precision: mean(|s| s.precision),
                macro_recall: mean(|s| s.recall),
                macro_f1: mean(|s| s.f1),
                terms: scores.len(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Field,
    Provider,
}

/// Rows from several reports in one canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub k: usize,
    pub macro_rows: Vec<MacroRow>,
    pub rows: Vec<EvalRow>,
    pub failures: Vec<Failure>,
}

pub const ROW_HEADER: &str = "provider,field,term,k,precision,recall,f1,pred_count,gold_count,hits";
pub const MACRO_HEADER: &str = "provider,field,k,macro_precision,macro_recall,macro_f1,terms";

/// Merges reports computed at the same `k`, ordered by `(field, provider)`
/// or `(provider, field)`.
pub fn compare(reports: &[EvalReport], group_by: GroupBy) -> Result<Comparison, EvalError> {
    let k = reports.first().map_or(0, |r| r.k);
    if let Some(other) = reports.iter().find(|r| r.k != k) {
        return Err(EvalError::MismatchedK(k, other.k));
    }
    let key = |provider: &str, field: &str| match group_by {
        GroupBy::Field => (field.to_owned(), provider.to_owned()),
        GroupBy::Provider => (provider.to_owned(), field.to_owned()),
    };
    let mut macro_rows: Vec<MacroRow> = reports.iter().flat_map(|r| r.macro_rows.iter().cloned()).collect();
    macro_rows.sort_by_key(|m| key(&m.provider, &m.field));
    let mut rows: Vec<EvalRow> = reports.iter().flat_map(|r| r.rows.iter().cloned()).collect();
    rows.sort_by(|a, b| {
        key(&a.provider, &a.field)
            .cmp(&key(&b.provider, &b.field))
            .then_with(|| a.term.cmp(&b.term))
    });
    let failures = reports.iter().flat_map(|r| r.failures.iter().cloned()).collect();
    Ok(Comparison {
        k,
        macro_rows,
        rows,
        failures,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

impl Comparison {
    pub fn write_macro_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{MACRO_HEADER}")?;
        for m in &self.macro_rows {
            writeln!(
                out,
                "{},{},{},{:.6},{:.6},{:.6},{}",
                csv_field(&m.provider),
                csv_field(&m.field),
                m.k,
                m.macro_precision,
                m.macro_recall,
                m.macro_f1,
                m.terms
            )?;
        }
        out.flush()
    }

    pub fn write_rows_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{ROW_HEADER}")?;
        for r in &self.rows {
            let s = &r.scores;
            writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{:.6},{},{},{}",
                csv_field(&r.provider),
                csv_field(&r.field),
                csv_field(&r.term),
                r.k,
                s.precision,
                s.recall,
                s.f1,
                s.pred_count,
                s.gold_count,
                s.hits
            )?;
        }
        out.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn vec_of(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn score_examples() {
        let s = score(&vec_of(&["a", "b", "c"]), &set(&["b", "c", "d"]));
        assert_eq!((s.precision, s.recall), (2.0 / 3.0, 2.0 / 3.0));
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
        let s = score(&vec_of(&["x"]), &set(&["y"]));
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        let s = score(&vec_of(&["y", "z"]), &set(&["y", "z"]));
        assert_eq!(s.f1, 1.0);
        let s = score(&[], &set(&["y"]));
        assert_eq!((s.precision, s.pred_count), (0.0, 0));
        // Normalization and de-duplication of predictions.
        let s = score(&vec_of(&["Binding_Assay", "binding assay"]), &set(&["binding assay"]));
        assert_eq!((s.pred_count, s.hits, s.precision), (1, 1, 1.0));
    }

    const GOLD: &str = r#"{"field":"optics","term":"lens","equivalents":["lenses","optic","lense","lenslet"]}
{"field":"optics","term":"prism","equivalents":["Prism","wedge"]}
{"field":"1641","term":"antibody","equivalents":["immunoglobulin","igg"]}
"#;

    #[test]
    fn parses_gold() {
        let synset = parse_synset(GOLD.as_bytes()).unwrap();
        assert_eq!(synset.records.len(), 3);
        assert_eq!(synset.records[1].equivalents, set(&["wedge"]));
        assert_eq!(synset.warnings.len(), 1);
        assert_eq!(synset.fields(), ["1641", "optics"].into());
    }

    #[test]
    fn gold_errors() {
        let dup = "{\"field\":\"f\",\"term\":\"a\",\"equivalents\":[\"b\"]}\n{\"field\":\"f\",\"term\":\"A\",\"equivalents\":[\"c\"]}\n";
        assert!(matches!(parse_synset(dup.as_bytes()), Err(EvalError::Synset { line: 2, .. })));
        let empty = "{\"field\":\"f\",\"term\":\"a\",\"equivalents\":[\"a\"]}\n";
        assert!(matches!(parse_synset(empty.as_bytes()), Err(EvalError::Synset { line: 1, .. })));
        assert!(parse_synset("nope\n".as_bytes()).is_err());
    }

    struct Fixed(&'static str, Vec<&'static str>);

    impl SuggestionProvider for Fixed {
        fn name(&self) -> &str {
            self.0
        }

        fn suggest(&self, _field: &str, term: &str, _k: usize) -> Result<Vec<String>, String> {
            if term == "antibody" {
                Err("no model".into())
            } else {
                Ok(self.1.iter().map(|s| s.to_string()).collect())
            }
        }
    }

    #[test]
    fn evaluate_and_compare() {
        let synset = parse_synset(GOLD.as_bytes()).unwrap();
        let a = evaluate(&Fixed("a", vec!["lenses", "optic", "wedge", "zoom", "prism"]), &synset.records, 4).unwrap();
        assert_eq!(a.rows.len(), 2);
        assert_eq!(a.failures.len(), 1);
        assert_eq!(a.rows[0].scores.hits, 2);
        assert_eq!(a.rows[0].scores.pred_count, 4);
        let oracle = GoldOracle::new(&synset.records);
        let b = evaluate(&oracle, &synset.records, 4).unwrap();
        assert!(b.macro_rows.iter().all(|m| m.macro_f1 == 1.0));

        let cmp = compare(&[a.clone(), b.clone()], GroupBy::Field).unwrap();
        let order: Vec<(&str, &str)> = cmp.macro_rows.iter().map(|m| (m.field.as_str(), m.provider.as_str())).collect();
        assert_eq!(order, [("1641", "gold-oracle"), ("optics", "a"), ("optics", "gold-oracle")]);
        let mut macro_csv = Vec::new();
        cmp.write_macro_csv(&mut macro_csv).unwrap();
        let text = String::from_utf8(macro_csv).unwrap();
        assert_eq!(text.lines().next().unwrap(), MACRO_HEADER);
        assert_eq!(text.lines().count(), 4);
        let mut rows_csv = Vec::new();
        cmp.write_rows_csv(&mut rows_csv).unwrap();
        assert!(String::from_utf8(rows_csv).unwrap().starts_with(ROW_HEADER));

        let other_k = evaluate(&oracle, &synset.records, 5).unwrap();
        assert!(matches!(compare(&[a, other_k], GroupBy::Provider), Err(EvalError::MismatchedK(4, 5))));
        assert!(evaluate(&oracle, &synset.records, 0).is_err());
    }

    fn brute_force(pred: &[String], gold: &BTreeSet<String>) -> (f64, f64, f64) {
        let p: BTreeSet<&String> = pred.iter().collect();
        let g: BTreeSet<&String> = gold.iter().collect();
        let inter = p.intersection(&g).count() as f64;
        let precision = if p.is_empty() { 0.0 } else { inter / p.len() as f64 };
        let recall = if g.is_empty() { 0.0 } else { inter / g.len() as f64 };
        let f = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        (precision, recall, f)
    }

    proptest! {
        #[test]
        fn matches_set_arithmetic(pred in prop::collection::vec("[a-h]", 0..8), gold in prop::collection::btree_set("[a-h]", 1..8)) {
            let s = score(&pred, &gold);
            prop_assert_eq!((s.precision, s.recall, s.f1), brute_force(&pred, &gold));
            prop_assert!((0.0..=1.0).contains(&s.f1));
        }
    }
}
