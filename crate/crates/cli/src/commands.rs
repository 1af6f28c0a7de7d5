use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use patexpand_core::corpus::{ingest, parse_stopwords, FilterConfig, TokenStream};
use patexpand_core::crowd::{export_log, expand_with_crowd, import_log, read_log, CrowdModel};
use patexpand_core::embedding::{self, EmbeddingModel, TrainParams};
use patexpand_core::eval::{
    compare, evaluate, load_synset, BlendProvider, CrowdProvider, EmbeddingProvider, EvalReport, GoldOracle, GroupBy,
    SuggestionProvider,
};
use patexpand_core::expansion::{expand, Expansion, ExpansionRequest};
use patexpand_core::fixtures;
use patexpand_service::ServiceConfig;
use serde::Deserialize;

use crate::args::*;
use crate::error::CliError;
use crate::report;

type Result<T> = std::result::Result<T, CliError>;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::write(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::write(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::read(path, e))
}

#[derive(Deserialize)]
struct FilterFile {
    stopwords_file: Option<PathBuf>,
    #[serde(flatten)]
    filter: FilterConfig,
}

/// Filter settings from a TOML file; `stopwords_file` is resolved relative
/// to the file and replaces the default list.
pub fn load_filter(path: Option<&Path>) -> Result<FilterConfig> {
    let Some(path) = path else {
        return Ok(FilterConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
    let file: FilterFile =
        toml::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut filter = file.filter;
    if let Some(stop) = file.stopwords_file {
        let stop = path.parent().unwrap_or(Path::new(".")).join(stop);
        filter.stopwords = parse_stopwords(&fs::read_to_string(&stop).map_err(|e| CliError::read(&stop, e))?);
    }
    filter.validate()?;
    Ok(filter)
}

pub fn ingest_cmd(args: &IngestArgs) -> Result<()> {
    let mut filter = load_filter(args.config.as_deref())?;
    if let Some(passes) = args.phrases {
        filter.phrase_passes = passes;
    }
    filter.validate()?;
    let ingested = ingest(open(&args.input)?, &args.scope, args.lenient)?;
    for (line, message) in &ingested.report.rejected {
        eprintln!("warning: line {line}: {message}");
    }
    let stream = ingested.corpus.tokenize(&filter);
    let mut out = create(&args.out)?;
    stream.write_lines(&mut out).map_err(|e| CliError::write(&args.out, e))?;
    let ids_path = sidecar(&args.out, "ids");
    let mut ids = create(&ids_path)?;
    for doc in &ingested.corpus.documents {
        writeln!(ids, "{}", doc.id).map_err(|e| CliError::write(&ids_path, e))?;
    }
    ids.flush().map_err(|e| CliError::write(&ids_path, e))?;
    let report = &ingested.report;
    println!(
        "documents {} out_of_scope {} rejected {} tokens {}",
        report.accepted,
        report.out_of_scope,
        report.rejected.len(),
        stream.total_tokens()
    );
    Ok(())
}

fn sidecar(path: &Path, ext: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".");
    name.push(ext);
    PathBuf::from(name)
}

pub fn train_params(args: &TrainArgs) -> TrainParams {
    let d = TrainParams::default();
    TrainParams {
        dim: args.dim.unwrap_or(d.dim),
        window: args.window.unwrap_or(d.window),
        negatives: args.negatives.unwrap_or(d.negatives),
        epochs: args.epochs.unwrap_or(d.epochs),
        initial_lr: args.lr.unwrap_or(d.initial_lr),
        min_count: args.min_count.unwrap_or(d.min_count),
        subsample_t: args.subsample.unwrap_or(d.subsample_t),
        subword_mode: args.subword,
        minn: args.minn.unwrap_or(d.minn),
        maxn: args.maxn.unwrap_or(d.maxn),
        bucket: args.bucket.unwrap_or(d.bucket),
        seed: args.seed.unwrap_or(d.seed),
        threads: args.threads.unwrap_or(d.threads),
    }
}

pub fn train_cmd(args: &TrainArgs) -> Result<()> {
    let params = train_params(args);
    params.validate()?;
    let filter = load_filter(args.config.as_deref())?;
    let stream = TokenStream::read_lines(open(&args.tokens)?).map_err(|e| CliError::read(&args.tokens, e))?;
    let model = embedding::train(&stream, &params)?
        .with_scope(args.scope.clone())
        .with_filter(filter);
    embedding::save(&model, &args.out).map_err(|e| CliError::write(&args.out, e))?;
    println!(
        "vocabulary {} dim {} scope {} -> {}",
        model.vocab().len(),
        model.dim(),
        model.scope(),
        args.out.display()
    );
    Ok(())
}

/// Runs the expansion `expand` describes, blended with votes if given.
pub fn run_expand(args: &ExpandArgs, model: &EmbeddingModel) -> Result<Expansion> {
    let request = ExpansionRequest {
        terms: args.terms.clone(),
        k: args.k,
        exclude: args.exclude.iter().cloned().collect(),
    };
    let Some(log) = &args.votes else {
        return Ok(expand(model, &request)?);
    };
    let crowd = CrowdModel::rebuild(&read_log(log)?);
    let scope = args
        .scope
        .clone()
        .or_else(|| model.scope().crowd_code().cloned())
        .ok_or_else(|| CliError::usage("--scope is required for a model without a unit scope"))?;
    let query = args.query.clone().unwrap_or_else(|| args.terms[0].clone());
    Ok(expand_with_crowd(model, &request, crowd.suggestions(&scope, &query))?)
}

pub fn format_suggestions(expansion: &Expansion) -> String {
    expansion
        .suggestions
        .iter()
        .map(|s| format!("{}\t{:.6}\t{}\t{}\n", s.term, s.score, s.source.as_str(), s.net_votes))
        .collect()
}

pub fn expand_cmd(args: &ExpandArgs) -> Result<()> {
    let model = embedding::load(&args.model)?;
    let expansion = run_expand(args, &model)?;
    for skipped in &expansion.skipped {
        eprintln!("skipped `{}`: {}", skipped.term, skipped.reason);
    }
    let mut stdout = io::stdout().lock();
    stdout
        .write_all(format_suggestions(&expansion).as_bytes())
        .map_err(|e| CliError::internal(e.to_string()))?;
    Ok(())
}

fn load_model(dir: &Path) -> Result<Arc<EmbeddingModel>> {
    Ok(Arc::new(embedding::load(dir)?))
}

fn named_model(arg: &str) -> Result<(String, PathBuf)> {
    match arg.split_once('=') {
        Some((name, dir)) if !name.is_empty() => Ok((name.to_owned(), PathBuf::from(dir))),
        _ => {
            let dir = PathBuf::from(arg);
            let name = dir
                .file_name()
                .and_then(|n| n.to_str())
                .ok_or_else(|| CliError::usage(format!("cannot name model `{arg}`")))?
                .to_owned();
            Ok((name, dir))
        }
    }
}

/// Builds every provider named on the command line.
pub fn build_providers(args: &EvalArgs, synset: &[patexpand_core::eval::SynRecord]) -> Result<Vec<Box<dyn SuggestionProvider>>> {
    let mut models = Vec::new();
    for arg in &args.model {
        let (name, dir) = named_model(arg)?;
        models.push((name, load_model(&dir)?));
    }
    let mut providers: Vec<Box<dyn SuggestionProvider>> = models
        .iter()
        .map(|(name, m)| Box::new(EmbeddingProvider::new(name.clone(), m.clone())) as Box<dyn SuggestionProvider>)
        .collect();

    let crowd = |log: &str| -> Result<CrowdModel> { Ok(CrowdModel::rebuild(&read_log(Path::new(log))?)) };
    for arg in &args.provider {
        let provider: Box<dyn SuggestionProvider> = match arg.split_once(':') {
            None if arg == "oracle" => Box::new(GoldOracle::new(synset)),
            Some(("crowd", log)) => Box::new(CrowdProvider::new("crowd", crowd(log)?, args.crowd_scope.clone())),
            Some(("blend", log)) => {
                let (name, model) = models
                    .first()
                    .ok_or_else(|| CliError::usage("blend:<log> needs a --model"))?;
                let crowd = CrowdProvider::new("crowd", crowd(log)?, args.crowd_scope.clone());
                Box::new(BlendProvider::new(
                    format!("blend-{name}"),
                    EmbeddingProvider::new(name.clone(), model.clone()),
                    crowd,
                ))
            }
            Some(("scoped", list)) => {
                let mut by_field = BTreeMap::new();
                for pair in list.split(',') {
                    let (field, dir) = pair
                        .split_once('=')
                        .ok_or_else(|| CliError::usage(format!("expected <field>=<dir>, got `{pair}`")))?;
                    by_field.insert(field.to_owned(), load_model(Path::new(dir))?);
                }
                Box::new(EmbeddingProvider::scoped("scoped", by_field, None))
            }
            _ => return Err(CliError::usage(format!("unknown provider `{arg}`"))),
        };
        providers.push(provider);
    }
    if providers.is_empty() {
        return Err(CliError::usage("give at least one --model or --provider"));
    }
    Ok(providers)
}

pub fn eval_cmd(args: &EvalArgs) -> Result<()> {
    let synset = load_synset(&args.synset)?;
    for warning in &synset.warnings {
        eprintln!("warning: {warning}");
    }
    let providers = build_providers(args, &synset.records)?;
    let reports: Vec<EvalReport> = providers
        .iter()
        .map(|p| evaluate(p.as_ref(), &synset.records, args.k))
        .collect::<std::result::Result<_, _>>()?;
    let group_by = match args.group_by {
        GroupByArg::Field => GroupBy::Field,
        GroupByArg::Provider => GroupBy::Provider,
    };
    let comparison = compare(&reports, group_by)?;
    for f in &comparison.failures {
        eprintln!("failed: {} {} `{}`: {}", f.provider, f.field, f.term, f.error);
    }

    match &args.out {
        Some(out) => {
            comparison
                .write_macro_csv(create(out)?)
                .map_err(|e| CliError::write(out, e))?;
        }
        None => comparison
            .write_macro_csv(io::stdout().lock())
            .map_err(|e| CliError::internal(e.to_string()))?,
    }
    let detail = args.detail.clone().or_else(|| {
        args.out.as_ref().map(|out| {
            let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            out.with_file_name(format!("{stem}.terms.csv"))
        })
    });
    if let Some(detail) = detail {
        comparison
            .write_rows_csv(create(&detail)?)
            .map_err(|e| CliError::write(&detail, e))?;
    }
    Ok(())
}

pub fn serve_cmd(args: &ServeArgs) -> Result<()> {
    let config = ServiceConfig::load(args.config.as_deref())?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::internal(e.to_string()))?;
    runtime.block_on(async {
        let server = patexpand_service::start(&config).await?;
        println!("listening on http://{}", server.addr);
        let _ = io::stdout().flush();
        let _ = tokio::signal::ctrl_c().await;
        server.stop().await.map_err(|e| CliError::internal(e.to_string()))
    })
}

pub fn votes_cmd(command: &VotesCommand) -> Result<()> {
    match command {
        VotesCommand::Export { log, out } => match out {
            Some(out) => export_log(log, create(out)?)?,
            None => export_log(log, io::stdout().lock())?,
        },
        VotesCommand::Import { log, input, force } => {
            let bytes = fs::read(input).map_err(|e| CliError::read(input, e))?;
            let n = import_log(&bytes, log, *force)?;
            println!("imported {n} votes into {}", log.display());
        }
    }
    Ok(())
}

pub fn report_cmd(args: &ReportArgs) -> Result<()> {
    let mut bars = Vec::new();
    for path in &args.csv {
        let text = fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
        bars.extend(report::parse_macro_csv(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?);
    }
    let svg = report::render_svg(&bars, &args.title);
    let mut out = create(&args.out)?;
    out.write_all(svg.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::write(&args.out, e))
}

pub fn fixture_cmd(args: &FixtureArgs) -> Result<()> {
    use patexpand_core::eval::SynRecord;

    let (documents, gold) = match args.kind {
        FixtureKind::Synonyms => {
            let f = fixtures::planted_synonyms(args.seed, 10, 200);
            let gold = f
                .pairs
                .iter()
                .flat_map(|(a, b)| [(a, b), (b, a)])
                .map(|(a, b)| SynRecord {
                    field: "planted".into(),
                    term: a.clone(),
                    equivalents: [b.clone()].into(),
                })
                .collect();
            (f.documents, gold)
        }
        FixtureKind::Clusters => {
            let f = fixtures::planted_clusters(args.seed);
            (f.documents, f.gold)
        }
        FixtureKind::Uplift => {
            let f = fixtures::crowd_uplift(args.seed);
            (f.documents, f.gold)
        }
        FixtureKind::WordSense => {
            let f = fixtures::word_sense(args.seed);
            (f.documents, f.gold)
        }
        FixtureKind::OpticsGold => {
            let synset = patexpand_core::eval::parse_synset(fixtures::OPTICS_GOLD.as_bytes())?;
            (Vec::new(), synset.records)
        }
    };
    let corpus_path = args.out_dir.join("corpus.jsonl");
    let gold_path = args.out_dir.join("gold.jsonl");
    if !documents.is_empty() {
        fixtures::write_documents(&documents, create(&corpus_path)?).map_err(|e| CliError::write(&corpus_path, e))?;
    }
    fixtures::write_gold(&gold, create(&gold_path)?).map_err(|e| CliError::write(&gold_path, e))?;
    println!("documents {} gold {} -> {}", documents.len(), gold.len(), args.out_dir.display());
    Ok(())
}
