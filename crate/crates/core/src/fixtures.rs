//! Synthetic corpora with planted structure, and matching gold sets.
//!
//! Every generator is a pure function of its seed. Words are random
//! letter strings, so nothing but the planted co-occurrence pattern can
//! make two of them similar. A *cluster* is a set of interchangeable words
//! that fill the slot of the same context templates; members of one cluster
//! end up near each other in a trained model.

use std::collections::{BTreeSet, HashSet};
use std::io::{self, Write};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Document, FilterConfig, TokenStream};
use crate::crowd::{CrowdError, Direction, Vote, VoteStore};
use crate::embedding::{EmbeddingModel, TrainParams};
use crate::eval::SynRecord;
use crate::scope::{Scope, UnitCode};

/// Small hand-written gold file in the optics area.
pub const OPTICS_GOLD: &str = include_str!("../data/optics_gold.jsonl");

/// Training parameters suited to the small fixture corpora: no subsampling
/// (every word is frequent in a corpus this size) and more epochs.
pub fn fixture_params(seed: u64) -> TrainParams {
    TrainParams {
        dim: 40,
        window: 4,
        negatives: 5,
        epochs: 25,
        initial_lr: 0.05,
        min_count: 1,
        subsample_t: 1.0,
        seed,
        threads: 1,
        ..TrainParams::default()
    }
}

struct Words {
    rng: ChaCha8Rng,
    used: HashSet<String>,
    stop: BTreeSet<String>,
}

impl Words {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            used: HashSet::new(),
            stop: FilterConfig::default().stopwords,
        }
    }

    /// A fresh pronounceable word of 5 to 7 letters.
    fn fresh(&mut self) -> String {
        const CONSONANTS: &[u8] = b"bcdfghjklmnprstvwxz";
        const VOWELS: &[u8] = b"aeiouy";
        loop {
            let len = self.rng.random_range(5..=7);
            let word: String = (0..len)
                .map(|i| {
                    let set = if i % 2 == 0 { CONSONANTS } else { VOWELS };
                    *set.choose(&mut self.rng).expect("non-empty") as char
                })
                .collect();
            if !self.stop.contains(&word) && self.used.insert(word.clone()) {
                return word;
            }
        }
    }

    fn many(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.fresh()).collect()
    }
}

struct Template {
    words: Vec<String>,
    slot: usize,
}

fn templates(rng: &mut ChaCha8Rng, filler: &[String], count: usize, len: usize) -> Vec<Template> {
    (0..count)
        .map(|_| Template {
            words: (0..len).map(|_| filler.choose(rng).expect("filler").clone()).collect(),
            slot: rng.random_range(0..=len),
        })
        .collect()
}

fn sentence(rng: &mut ChaCha8Rng, templates: &[Template], members: &[String]) -> String {
    let t = templates.choose(rng).expect("templates");
    let mut words: Vec<&str> = t.words.iter().map(String::as_str).collect();
    words.insert(t.slot, members.choose(rng).expect("members"));
    words.join(" ")
}

fn document(id: String, text: String, art_unit: Option<&UnitCode>) -> Document {
    Document {
        id,
        text,
        art_unit: art_unit.cloned(),
        workgroup: None,
        cpc: Vec::new(),
        date: None,
    }
}

/// Writes documents as corpus JSONL.
pub fn write_documents<W: Write>(documents: &[Document], mut out: W) -> io::Result<()> {
    for doc in documents {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Writes gold records as synonym-set JSONL.
pub fn write_gold<W: Write>(records: &[SynRecord], mut out: W) -> io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Tokenizes documents restricted to `scope` with the default filter.
pub fn token_stream(documents: &[Document], scope: &Scope) -> TokenStream {
    Corpus {
        scope: scope.clone(),
        documents: documents.iter().filter(|d| d.matches(scope)).cloned().collect(),
    }
    .tokenize(&FilterConfig::default())
}

/// Corpus where each of `pairs` word pairs is used interchangeably in the
/// same context templates.
#[derive(Debug, Clone)]
pub struct PlantedSynonyms {
    pub documents: Vec<Document>,
    pub pairs: Vec<(String, String)>,
}

pub fn planted_synonyms(seed: u64, pairs: usize, sentences: usize) -> PlantedSynonyms {
    let mut words = Words::new(seed);
    let filler = words.many(40);
    let planted: Vec<(String, String)> = (0..pairs).map(|_| (words.fresh(), words.fresh())).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5eed));
    let per_pair: Vec<Vec<Template>> = (0..pairs).map(|_| templates(&mut rng, &filler, 4, 6)).collect();
    let documents = (0..sentences)
        .map(|i| {
            let p = i % pairs;
            let members = [planted[p].0.clone(), planted[p].1.clone()];
            document(format!("syn-{i}"), sentence(&mut rng, &per_pair[p], &members), None)
        })
        .collect();
    PlantedSynonyms {
        documents,
        pairs: planted,
    }
}

/// Fraction of pairs where each word has its partner among its `k` nearest
/// neighbors.
pub fn pair_recall(model: &EmbeddingModel, pairs: &[(String, String)], k: usize) -> f64 {
    let found = |a: &str, b: &str| -> bool {
        let Ok(v) = model.vector(a) else { return false };
        let exclude = HashSet::from([a.to_owned()]);
        model
            .nearest(&v, k, &exclude)
            .map(|n| n.iter().any(|n| n.token == b))
            .unwrap_or(false)
    };
    let hits = pairs.iter().filter(|(a, b)| found(a, b) && found(b, a)).count();
    hits as f64 / pairs.len() as f64
}

/// An ambiguous head word with one planted cluster per sense.
#[derive(Debug, Clone)]
pub struct Head {
    pub field: String,
    pub head: String,
    /// The sense the gold set asks for.
    pub gold: Vec<String>,
    /// The other sense.
    pub distractor: Vec<String>,
}

/// Fields of ambiguous heads whose gold sense competes with a distractor
/// sense in the same corpus.
#[derive(Debug, Clone)]
pub struct PlantedClusters {
    pub documents: Vec<Document>,
    pub heads: Vec<Head>,
    pub gold: Vec<SynRecord>,
}

/// Art units used as fields by the cluster fixtures.
pub const CLUSTER_FIELDS: [&str; 2] = ["1641", "2811"];

pub fn planted_clusters(seed: u64) -> PlantedClusters {
    const HEADS_PER_FIELD: usize = 4;
    const CLUSTER_SIZE: usize = 8;
    const SENTENCES_PER_SENSE: usize = 60;

    let mut words = Words::new(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0xc1a5));
    let mut documents = Vec::new();
    let mut heads = Vec::new();
    for field in CLUSTER_FIELDS {
        let unit: UnitCode = field.parse().expect("valid unit");
        let filler = words.many(30);
        for _ in 0..HEADS_PER_FIELD {
            let head = Head {
                field: field.to_owned(),
                head: words.fresh(),
                gold: words.many(CLUSTER_SIZE),
                distractor: words.many(CLUSTER_SIZE),
            };
            for sense in [&head.gold, &head.distractor] {
                let t = templates(&mut rng, &filler, 5, 6);
                let mut members = sense.clone();
                members.push(head.head.clone());
                for _ in 0..SENTENCES_PER_SENSE {
                    let id = format!("clu-{}", documents.len());
                    documents.push(document(id, sentence(&mut rng, &t, &members), Some(&unit)));
                }
            }
            heads.push(head);
        }
    }
    let gold = heads
        .iter()
        .map(|h| SynRecord {
            field: h.field.clone(),
            term: h.head.clone(),
            equivalents: h.gold.iter().cloned().collect(),
        })
        .collect();
    PlantedClusters { documents, heads, gold }
}

/// The cluster fixture with gold sets extended by terms that never occur in
/// the corpus, as experts know terms no training text contains.
pub fn crowd_uplift(seed: u64) -> PlantedClusters {
    let mut fixture = planted_clusters(seed);
    let mut words = Words::new(seed ^ 0x0dd_ba11);
    for w in fixture.heads.iter().flat_map(|h| h.gold.iter().chain(&h.distractor).chain([&h.head])) {
        words.used.insert(w.clone());
    }
    for record in &mut fixture.gold {
        record.equivalents.extend(words.many(4));
    }
    fixture
}

/// Records votes for every other member of each sorted gold set, starting
/// with the first: an up-vote from two experts when the model knows the
/// term, a manual addition otherwise.
pub fn inject_gold_votes(
    store: &VoteStore,
    gold: &[SynRecord],
    model_knows: impl Fn(&str) -> bool,
) -> Result<usize, CrowdError> {
    let mut count = 0;
    for record in gold {
        let scope: UnitCode = record
            .field
            .parse()
            .map_err(|e| CrowdError::Rejected(format!("field `{}`: {e}", record.field)))?;
        for term in record.equivalents.iter().step_by(2) {
            if model_knows(term) {
                for user in ["expert-a", "expert-b"] {
                    store.record_vote(Vote::new(user, &scope, &record.term, term, Direction::Up))?;
                    count += 1;
                }
            } else {
                store.add_term("expert-a", &scope, &record.term, term)?;
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Two technology areas sharing ambiguous words with a different planted
/// sense in each.
#[derive(Debug, Clone)]
pub struct WordSense {
    pub documents: Vec<Document>,
    /// Workgroup of each domain; documents carry an art unit inside it.
    pub domains: [UnitCode; 2],
    /// Gold per domain; `field` is the workgroup code.
    pub gold: Vec<SynRecord>,
}

pub fn word_sense(seed: u64) -> WordSense {
    const SHARED: usize = 6;
    const SENSE_SIZE: usize = 8;
    const SENTENCES_PER_SENSE: usize = 60;

    let domains: [UnitCode; 2] = ["1640".parse().expect("unit"), "2810".parse().expect("unit")];
    let art_units: [UnitCode; 2] = ["1641".parse().expect("unit"), "2811".parse().expect("unit")];
    let mut words = Words::new(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5e75e));
    let shared = words.many(SHARED);
    let mut documents = Vec::new();
    let mut gold = Vec::new();
    for (domain, unit) in domains.iter().zip(&art_units) {
        let filler = words.many(30);
        for head in &shared {
            let sense = words.many(SENSE_SIZE);
            let t = templates(&mut rng, &filler, 5, 6);
            let mut members = sense.clone();
            members.push(head.clone());
            for _ in 0..SENTENCES_PER_SENSE {
                let id = format!("ws-{}", documents.len());
                documents.push(document(id, sentence(&mut rng, &t, &members), Some(unit)));
            }
            gold.push(SynRecord {
                field: domain.as_str().to_owned(),
                term: head.clone(),
                equivalents: sense.into_iter().collect(),
            });
        }
    }
    WordSense {
        documents,
        domains,
        gold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;
    use crate::eval::parse_synset;

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(planted_synonyms(3, 10, 200).documents, planted_synonyms(3, 10, 200).documents);
        assert_ne!(planted_synonyms(3, 10, 200).documents, planted_synonyms(4, 10, 200).documents);
        assert_eq!(planted_clusters(1).gold, planted_clusters(1).gold);
        assert_eq!(word_sense(2).documents, word_sense(2).documents);
    }

    #[test]
    fn words_survive_tokenization() {
        let fixture = planted_synonyms(9, 10, 200);
        assert_eq!(fixture.documents.len(), 200);
        let config = FilterConfig::default();
        for doc in &fixture.documents {
            let tokens = tokenize(&doc.text, &config);
            assert_eq!(tokens.join(" "), doc.text);
        }
        let distinct: HashSet<&String> = fixture.pairs.iter().flat_map(|(a, b)| [a, b]).collect();
        assert_eq!(distinct.len(), 20);
    }

    #[test]
    fn uplift_gold_contains_unseen_terms() {
        let fixture = crowd_uplift(5);
        let seen: HashSet<String> = token_stream(&fixture.documents, &Scope::Generic)
            .docs
            .into_iter()
            .flatten()
            .collect();
        for record in &fixture.gold {
            assert_eq!(record.equivalents.iter().filter(|t| !seen.contains(*t)).count(), 4);
        }
        let store = VoteStore::in_memory();
        let n = inject_gold_votes(&store, &fixture.gold, |t| seen.contains(t)).unwrap();
        assert!(n > 0);
    }

    #[test]
    fn word_sense_domains_are_separable() {
        let fixture = word_sense(1);
        let a = token_stream(&fixture.documents, &Scope::Workgroup(fixture.domains[0].clone()));
        let all = token_stream(&fixture.documents, &Scope::Generic);
        assert_eq!(a.docs.len() * 2, all.docs.len());
        assert_eq!(fixture.gold.len(), 12);
    }

    #[test]
    fn optics_gold_parses() {
        let synset = parse_synset(OPTICS_GOLD.as_bytes()).unwrap();
        assert!(synset.records.len() >= 5);
        assert!(synset.warnings.is_empty());
    }
}
