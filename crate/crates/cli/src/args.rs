use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use patexpand_core::{Scope, UnitCode};

#[derive(Debug, Parser)]
#[command(name = "patexpand", version, about = "Technology-scoped query expansion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read a JSONL corpus, keep one scope and write a tokenized corpus.
    Ingest(IngestArgs),
    /// Train an embedding model on a tokenized corpus.
    Train(TrainArgs),
    /// Print ranked related terms for selected terms.
    Expand(ExpandArgs),
    /// Score suggestion providers against a gold synonym file.
    Eval(EvalArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
    /// Export or import the vote log.
    #[command(subcommand)]
    Votes(VotesCommand),
    /// Render macro CSV files as a grouped bar chart.
    Report(ReportArgs),
    /// Generate a synthetic corpus and matching gold file.
    Fixture(FixtureArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long = "in", value_name = "JSONL")]
    pub input: PathBuf,
    #[arg(long, default_value = "generic")]
    pub scope: Scope,
    /// TOML filter settings (stopwords, stopwords_file, bio_min_len, …).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Tokenized output; document ids go to `<out>.ids`.
    #[arg(long)]
    pub out: PathBuf,
    /// Skip malformed records instead of failing.
    #[arg(long)]
    pub lenient: bool,
    /// Phrase-joining passes (overrides the config file).
    #[arg(long)]
    pub phrases: Option<u8>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub tokens: PathBuf,
    /// Output model directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Scope recorded in the model.
    #[arg(long, default_value = "generic")]
    pub scope: Scope,
    /// Filter settings used for term lookups; should match ingestion.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub min_count: Option<u64>,
    #[arg(long)]
    pub subsample: Option<f64>,
    /// Add hashed character n-gram vectors.
    #[arg(long)]
    pub subword: bool,
    #[arg(long)]
    pub minn: Option<usize>,
    #[arg(long)]
    pub maxn: Option<usize>,
    #[arg(long)]
    pub bucket: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Comma-separated; the first is the query term.
    #[arg(long, value_delimiter = ',', required = true)]
    pub terms: Vec<String>,
    #[arg(short, long, default_value_t = patexpand_core::expansion::DEFAULT_K)]
    pub k: usize,
    #[arg(long, value_delimiter = ',')]
    pub exclude: Vec<String>,
    /// Vote log to blend in.
    #[arg(long)]
    pub votes: Option<PathBuf>,
    /// Crowd scope; defaults to the model's unit.
    #[arg(long, requires = "votes")]
    pub scope: Option<UnitCode>,
    /// Crowd query term; defaults to the first term.
    #[arg(long, requires = "votes")]
    pub query: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GroupByArg {
    Field,
    Provider,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Embedding model, as `<dir>` or `<name>=<dir>`. Repeatable.
    #[arg(long)]
    pub model: Vec<String>,
    /// `oracle`, `crowd:<log>`, `blend:<log>` (with the first model) or
    /// `scoped:<field>=<dir>[,<field>=<dir>…]`. Repeatable.
    #[arg(long)]
    pub provider: Vec<String>,
    #[arg(long)]
    pub synset: PathBuf,
    #[arg(short, long, default_value_t = patexpand_core::expansion::DEFAULT_K)]
    pub k: usize,
    /// Macro CSV; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-term CSV; defaults to `<out stem>.terms.csv`.
    #[arg(long)]
    pub detail: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "field")]
    pub group_by: GroupByArg,
    /// Crowd scope for fields that are not unit codes.
    #[arg(long)]
    pub crowd_scope: Option<UnitCode>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "PATEXPAND_CONFIG")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum VotesCommand {
    /// Copy the log to a file or stdout.
    Export {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a log file and install it.
    Import {
        #[arg(long)]
        log: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        /// Replace a non-empty log.
        #[arg(long)]
        force: bool,
    },
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Macro CSV files from `eval`.
    #[arg(long, num_args = 1.., required = true)]
    pub csv: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "Macro F1")]
    pub title: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FixtureKind {
    Synonyms,
    Clusters,
    Uplift,
    WordSense,
    OpticsGold,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(value_enum)]
    pub kind: FixtureKind,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Receives `corpus.jsonl` and `gold.jsonl`.
    #[arg(long)]
    pub out_dir: PathBuf,
}
