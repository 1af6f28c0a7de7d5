//! Expert votes on suggestions, aggregated per organizational unit.
//!
//! Every vote is appended to a JSONL log; [`CrowdModel`] is the aggregate,
//! rebuildable from the log at any time. Within a unit and query term only a
//! user's latest vote on a term counts. Art units inherit the votes of their
//! workgroup for `(user, term)` pairs they have no vote for themselves.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SubsecRound, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::normalize_term;
use crate::embedding::EmbeddingModel;
use crate::expansion::{expand, Expansion, ExpansionError, ExpansionRequest, Source, Suggestion};
use crate::scope::UnitCode;

#[derive(Debug, Error)]
pub enum CrowdError {
    #[error("vote rejected: {0}")]
    Rejected(String),
    #[error("vote log line {line}: {message}")]
    Log { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Clear,
}

/// A vote as submitted, before it is sequenced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vote {
    pub user: String,
    pub scope: UnitCode,
    pub query_term: String,
    pub term: String,
    pub direction: Direction,
    pub manual: bool,
}

impl Vote {
    pub fn new(user: &str, scope: &UnitCode, query_term: &str, term: &str, direction: Direction) -> Self {
        Self {
            user: user.to_owned(),
            scope: scope.clone(),
            query_term: query_term.to_owned(),
            term: term.to_owned(),
            direction,
            manual: false,
        }
    }

    /// Normalizes both terms and checks the vote is acceptable.
    fn normalized(mut self) -> Result<Self, CrowdError> {
        self.user = self.user.trim().to_owned();
        self.query_term = normalize_term(&self.query_term);
        self.term = normalize_term(&self.term);
        if self.user.is_empty() {
            return Err(CrowdError::Rejected("user is empty".into()));
        }
        if self.query_term.is_empty() || self.term.is_empty() {
            return Err(CrowdError::Rejected("terms must not be empty after normalization".into()));
        }
        if self.query_term == self.term {
            return Err(CrowdError::Rejected("a term cannot be voted for itself".into()));
        }
        if self.manual && self.direction != Direction::Up {
            return Err(CrowdError::Rejected("manual additions are up-votes".into()));
        }
        Ok(self)
    }
}

/// One line of the vote log. Field order is the log's column order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub user: String,
    pub scope: UnitCode,
    pub query_term: String,
    pub term: String,
    pub direction: Direction,
    pub ts: DateTime<Utc>,
    pub seq: u64,
    pub manual: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EffectiveVote {
    pub up: bool,
    pub manual: bool,
    pub seq: u64,
    pub ts: DateTime<Utc>,
}

/// A term's tally for one `(scope, query_term)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CrowdSuggestion {
    pub term: String,
    pub net_votes: i64,
    pub manual: bool,
}

type TermVotes = BTreeMap<String, BTreeMap<String, EffectiveVote>>;

/// Effective votes keyed by `(scope, query_term) -> term -> user`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CrowdModel {
    entries: BTreeMap<(UnitCode, String), TermVotes>,
}

impl CrowdModel {
    /// Rebuilds the aggregate by replaying records in log order.
    pub fn rebuild<'a>(records: impl IntoIterator<Item = &'a VoteRecord>) -> Self {
        let mut model = Self::default();
        for record in records {
            model.apply(record);
        }
        model
    }

    /// Applies one record. Repeating a user's current vote changes nothing.
    pub fn apply(&mut self, record: &VoteRecord) {
        let key = (record.scope.clone(), record.query_term.clone());
        if record.direction == Direction::Clear {
            if let Some(terms) = self.entries.get_mut(&key) {
                if let Some(users) = terms.get_mut(&record.term) {
                    users.remove(&record.user);
                    if users.is_empty() {
                        terms.remove(&record.term);
                    }
                }
                if terms.is_empty() {
                    self.entries.remove(&key);
                }
            }
            return;
        }
        let up = record.direction == Direction::Up;
        let users = self
            .entries
            .entry(key)
            .or_default()
            .entry(record.term.clone())
            .or_default();
        match users.get_mut(&record.user) {
            Some(existing) if existing.up == up => existing.manual |= record.manual,
            _ => {
                users.insert(
                    record.user.clone(),
                    EffectiveVote {
                        up,
                        manual: record.manual,
                        seq: record.seq,
                        ts: record.ts,
                    },
                );
            }
        }
    }

    /// Per-term `(net_votes, manual, last_updated)` for one exact scope.
    pub fn tally(&self, scope: &UnitCode, query_term: &str) -> BTreeMap<String, (i64, bool, DateTime<Utc>)> {
        let Some(terms) = self.entries.get(&(scope.clone(), query_term.to_owned())) else {
            return BTreeMap::new();
        };
        terms
            .iter()
            .map(|(term, users)| {
                let net = users.values().map(|v| if v.up { 1 } else { -1 }).sum();
                let manual = users.values().any(|v| v.manual);
                let last = users.values().map(|v| v.ts).max().expect("no empty user maps");
                (term.clone(), (net, manual, last))
            })
            .collect()
    }

    /// A user's effective votes for one exact scope and query term.
    pub fn user_votes(&self, user: &str, scope: &UnitCode, query_term: &str) -> Vec<(String, EffectiveVote)> {
        self.entries
            .get(&(scope.clone(), normalize_term(query_term)))
            .map(|terms| {
                terms
                    .iter()
                    .filter_map(|(term, users)| users.get(user).map(|v| (term.clone(), *v)))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Colleagues' suggestions for `query_term`, ordered by net votes, then
    /// manual additions first, then term. Terms at or below zero are kept;
    /// [`blend`] decides what to show.
    pub fn suggestions(&self, scope: &UnitCode, query_term: &str) -> Vec<CrowdSuggestion> {
        let query_term = normalize_term(query_term);
        let mut effective: HashMap<(&str, &str), &EffectiveVote> = HashMap::new();
        let mut collect = |unit: &UnitCode, override_existing: bool| {
            if let Some(terms) = self.entries.get(&(unit.clone(), query_term.clone())) {
                for (term, users) in terms {
                    for (user, vote) in users {
                        let key = (user.as_str(), term.as_str());
                        if override_existing || !effective.contains_key(&key) {
                            effective.insert(key, vote);
                        }
                    }
                }
            }
        };
        collect(scope, true);
        if let Some(parent) = scope.parent() {
            collect(&parent, false);
        }

        let mut per_term: BTreeMap<&str, (i64, bool)> = BTreeMap::new();
        for ((_, term), vote) in effective {
            let entry = per_term.entry(term).or_default();
            entry.0 += if vote.up { 1 } else { -1 };
            entry.1 |= vote.manual;
        }
        let mut out: Vec<CrowdSuggestion> = per_term
            .into_iter()
            .map(|(term, (net_votes, manual))| CrowdSuggestion {
                term: term.to_owned(),
                net_votes,
                manual,
            })
            .collect();
        out.sort_by(|a, b| {
            b.net_votes
                .cmp(&a.net_votes)
                .then(b.manual.cmp(&a.manual))
                .then_with(|| a.term.cmp(&b.term))
        });
        out
    }
}

/// Final ranking: positively voted crowd terms in crowd order, then the
/// embedding suggestions the crowd has no positive opinion on, truncated to
/// `k`. Net-negative terms are dropped wherever they appear; terms at zero
/// keep their embedding position.
pub fn blend(crowd: &[CrowdSuggestion], embedding: &[Suggestion], k: usize) -> Vec<Suggestion> {
    let by_term: HashMap<&str, &CrowdSuggestion> = crowd.iter().map(|c| (c.term.as_str(), c)).collect();
    let emb_score: HashMap<String, f64> = embedding
        .iter()
        .map(|s| (normalize_term(&s.term), s.score))
        .collect();

    let crowd_part = crowd.iter().filter(|c| c.net_votes > 0).map(|c| Suggestion {
        term: c.term.clone(),
        score: emb_score.get(&c.term).copied().unwrap_or(0.0),
        source: if c.manual { Source::Manual } else { Source::Crowd },
        net_votes: c.net_votes,
    });
    let embedding_part = embedding.iter().filter_map(|s| {
        let norm = normalize_term(&s.term);
        match by_term.get(norm.as_str()) {
            None => Some(s.clone()),
            Some(c) if c.net_votes == 0 => Some(Suggestion { net_votes: 0, ..s.clone() }),
            Some(_) => None,
        }
    });
    crowd_part.chain(embedding_part).take(k).collect()
}

/// Expansion with `crowd` (the tallies for the request's query term)
/// blended in. Crowd terms the request already selects or excludes are
/// dropped. Fetches `k` plus one neighbor per crowd entry before blending.
/// With no crowd entries this is exactly [`expand`].
pub fn expand_with_crowd(
    model: &EmbeddingModel,
    request: &ExpansionRequest,
    crowd: Vec<CrowdSuggestion>,
) -> Result<Expansion, ExpansionError> {
    let blocked: HashSet<String> = request
        .normalized_terms()?
        .into_iter()
        .chain(request.exclude.iter().map(|e| normalize_term(e)))
        .filter(|t| !t.is_empty())
        .collect();
    let crowd: Vec<CrowdSuggestion> = crowd.into_iter().filter(|c| !blocked.contains(&c.term)).collect();
    let fetch = ExpansionRequest {
        k: request.k + crowd.len(),
        ..request.clone()
    };
    let mut expansion = expand(model, &fetch)?;
    expansion.suggestions = blend(&crowd, &expansion.suggestions, request.k);
    Ok(expansion)
}

struct Writer {
    file: Option<File>,
    next_seq: u64,
}

/// Durable vote store: a single serialized writer appending to the log and
/// updating the in-memory aggregate; readers see consistent snapshots.
pub struct VoteStore {
    path: Option<PathBuf>,
    writer: Mutex<Writer>,
    model: RwLock<CrowdModel>,
}

impl VoteStore {
    /// A store without a backing file.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            writer: Mutex::new(Writer { file: None, next_seq: 1 }),
            model: RwLock::new(CrowdModel::default()),
        }
    }

    /// Opens (or creates) the log at `path` and rebuilds the aggregate.
    pub fn open(path: &Path) -> Result<Self, CrowdError> {
        let records = if path.exists() { read_log(path)? } else { Vec::new() };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let next_seq = records.last().map_or(1, |r| r.seq + 1);
        Ok(Self {
            path: Some(path.to_owned()),
            writer: Mutex::new(Writer {
                file: Some(file),
                next_seq,
            }),
            model: RwLock::new(CrowdModel::rebuild(&records)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Sequences, logs and applies a vote. The aggregate reflects the vote
    /// by the time this returns.
    pub fn record_vote(&self, vote: Vote) -> Result<VoteRecord, CrowdError> {
        let vote = vote.normalized()?;
        let mut writer = self.writer.lock();
        let record = VoteRecord {
            user: vote.user,
            scope: vote.scope,
            query_term: vote.query_term,
            term: vote.term,
            direction: vote.direction,
            ts: Utc::now().trunc_subsecs(3),
            seq: writer.next_seq,
            manual: vote.manual,
        };
        if let Some(file) = writer.file.as_mut() {
            let mut line = serde_json::to_string(&record).expect("vote records serialize");
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.sync_data()?;
        }
        writer.next_seq += 1;
        self.model.write().apply(&record);
        Ok(record)
    }

    /// Manually adds a term: an up-vote flagged as manual.
    pub fn add_term(&self, user: &str, scope: &UnitCode, query_term: &str, term: &str) -> Result<VoteRecord, CrowdError> {
        let mut vote = Vote::new(user, scope, query_term, term, Direction::Up);
        vote.manual = true;
        self.record_vote(vote)
    }

    pub fn crowd_suggestions(&self, scope: &UnitCode, query_term: &str) -> Vec<CrowdSuggestion> {
        self.model.read().suggestions(scope, query_term)
    }

    pub fn snapshot(&self) -> CrowdModel {
        self.model.read().clone()
    }

    pub fn read<T>(&self, f: impl FnOnce(&CrowdModel) -> T) -> T {
        f(&self.model.read())
    }
}

/// Parses a vote log, checking that sequence numbers strictly increase.
pub fn read_log(path: &Path) -> Result<Vec<VoteRecord>, CrowdError> {
    parse_log(BufReader::new(File::open(path)?))
}

pub fn parse_log<R: BufRead>(reader: R) -> Result<Vec<VoteRecord>, CrowdError> {
    let mut records: Vec<VoteRecord> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: VoteRecord = serde_json::from_str(&line).map_err(|e| CrowdError::Log {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if records.last().is_some_and(|prev| prev.seq >= record.seq) {
            return Err(CrowdError::Log {
                line: idx + 1,
                message: format!("sequence number {} does not increase", record.seq),
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Copies a log verbatim.
pub fn export_log<W: Write>(path: &Path, mut out: W) -> Result<(), CrowdError> {
    out.write_all(&fs::read(path)?)?;
    out.flush()?;
    Ok(())
}

/// Validates `bytes` as a vote log and writes them verbatim to `path`.
/// A non-empty existing log is only replaced when `overwrite` is set.
pub fn import_log(bytes: &[u8], path: &Path, overwrite: bool) -> Result<usize, CrowdError> {
    let records = parse_log(bytes)?;
    if !overwrite && fs::metadata(path).is_ok_and(|m| m.len() > 0) {
        return Err(CrowdError::Rejected(format!(
            "{} already holds votes; pass overwrite to replace it",
            path.display()
        )));
    }
    fs::write(path, bytes)?;
    Ok(records.len())
}
