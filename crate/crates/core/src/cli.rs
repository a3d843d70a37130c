//! The `admitrag` command line. Exit codes: 0 success, 1 usage error,
//! 2 runtime failure. Data goes to stdout, logs to stderr.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::chunking::chunk_document;
use crate::config::Settings;
use crate::corpus::{load_rules, normalize_bytes, Document, KnowledgeBase, SourceKind};
use crate::distillation::{batch_jobs, run_distillation, write_dataset, DistillConfig, DEFAULT_MIN_GROUNDING};
use crate::evaluation::{
    build_report, compute_metrics, judgments_map, load_benchmark, load_runs, read_jsonl, Aggregates, ConfigRun,
    EvaluationReport, Judgment, ReportMetadata, ResponseRecord, SatisfactionEntry,
};
use crate::generation::{run_pipeline, Inquiry, PipelineConfig, PipelineName};
use crate::index::{SearchOptions, VectorIndex};
use crate::retrieval::{rebuild_index, RetrievalSnapshot};
use crate::service::{self, AppState};

#[derive(Debug, Parser)]
#[command(name = "admitrag", version, about = "Admissions inquiry drafting: ingest, index, distill, query, evaluate, serve")]
pub struct Cli {
    /// Settings file (TOML); environment variables override it.
    #[arg(long, global = true, env = "ADMITRAG_SETTINGS")]
    pub settings: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Add or update documents in a knowledge base file.
    Ingest(IngestArgs),
    /// Inspect chunking.
    #[command(subcommand)]
    Chunks(ChunksCommand),
    /// Build the vector index for a knowledge base.
    Index(IndexArgs),
    /// Generate a grounded question/answer dataset from the knowledge base.
    Distill(DistillArgs),
    /// Retrieve chunks for a question, optionally drafting a reply.
    Query(QueryArgs),
    /// Score pipeline configurations and write the comparison report.
    Evaluate(EvaluateArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub kb: PathBuf,
    /// Applied to plain-text inputs and to JSON-Lines records without one.
    #[arg(long, value_parser = parse_source_kind)]
    pub source_kind: SourceKind,
    /// TOML redaction rules; the built-in email/phone/SNILS rules otherwise.
    #[arg(long)]
    pub redaction_rules: Option<PathBuf>,
    /// Plain-text files (doc id = file stem) or `.jsonl` files of documents.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ChunksCommand {
    /// Print a document's chunks as JSON-Lines.
    Dump {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        doc: String,
    },
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub pairs_per_batch: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub docs_per_batch: u64,
    #[arg(long, default_value_t = DEFAULT_MIN_GROUNDING, value_parser = parse_fraction)]
    pub min_grounding: f64,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub parallelism: u64,
    /// Scripted generator fixture (JSON map); overrides configured endpoints.
    #[arg(long)]
    pub script: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub text: String,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    /// Also draft a reply with this pipeline configuration.
    #[arg(long, value_parser = parse_pipeline)]
    pub config: Option<PipelineName>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["benchmark", "aggregates"])))]
#[command(group(clap::ArgGroup::new("mode").args(["responses_dir", "live"])))]
pub struct EvaluateArgs {
    /// Benchmark cases (JSON-Lines).
    #[arg(long, requires = "mode")]
    pub benchmark: Option<PathBuf>,
    /// Pre-aggregated metrics (JSON), rendered as-is.
    #[arg(long, conflicts_with_all = ["benchmark", "responses_dir", "live"])]
    pub aggregates: Option<PathBuf>,
    /// Directory of `<config>.jsonl` response files.
    #[arg(long)]
    pub responses_dir: Option<PathBuf>,
    /// Generate responses now, using the configured endpoints.
    #[arg(long, requires = "kb")]
    pub live: bool,
    /// Knowledge base for live runs.
    #[arg(long)]
    pub kb: Option<PathBuf>,
    /// Satisfaction survey entries (JSON-Lines).
    #[arg(long)]
    pub survey: Option<PathBuf>,
    /// `all` or a comma-separated list of configuration names.
    #[arg(long, default_value = "all", value_parser = parse_configs)]
    pub configs: ConfigList,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Clone)]
pub struct ConfigList(pub Vec<PipelineName>);

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Service settings file; same keys as `--settings`.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn parse_source_kind(s: &str) -> Result<SourceKind, String> {
    s.parse().map_err(|e: crate::corpus::CorpusError| e.to_string())
}

fn parse_pipeline(s: &str) -> Result<PipelineName, String> {
    s.parse()
}

fn parse_configs(s: &str) -> Result<ConfigList, String> {
    if s == "all" {
        return Ok(ConfigList(PipelineName::ALL.to_vec()));
    }
    let mut names = s.split(',').map(|p| p.trim().parse()).collect::<Result<Vec<PipelineName>, _>>()?;
    names.sort();
    names.dedup();
    Ok(ConfigList(names))
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err("must be between 0 and 1".into())
    }
}

/// A failed command: usage errors exit 1, everything else 2.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Parses `args` and runs the command. Help and version requests exit 0.
pub fn run_from<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    init_logging();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Usage(msg) | Failure::Runtime(msg)) = &f;
            eprintln!("error: {msg}");
            ExitCode::from(f.exit_code())
        }
    }
}

pub fn run() -> ExitCode {
    run_from(std::env::args_os())
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .try_init();
}

pub fn execute(cli: Cli) -> Result<(), Failure> {
    let settings_path = match &cli.command {
        Command::Serve(ServeArgs { config: Some(p) }) => Some(p.clone()),
        _ => cli.settings.clone(),
    };
    if let Some(p) = &settings_path {
        if !p.is_file() {
            return Err(Failure::Usage(format!("settings file {} does not exist", p.display())));
        }
    }
    let settings = Settings::load(settings_path.as_deref()).map_err(runtime)?;
    match cli.command {
        Command::Ingest(a) => ingest(&settings, a),
        Command::Chunks(ChunksCommand::Dump { kb, doc }) => dump_chunks(&settings, &kb, &doc),
        Command::Index(a) => build_index(&settings, a),
        Command::Distill(a) => distill(&settings, a),
        Command::Query(a) => query(&settings, a),
        Command::Evaluate(a) => evaluate(&settings, a),
        Command::Serve(_) => serve(settings),
    }
}

fn open_existing_kb(path: &Path) -> Result<KnowledgeBase, Failure> {
    if !path.is_file() {
        return Err(Failure::Runtime(format!("knowledge base {} not found", path.display())));
    }
    KnowledgeBase::load(path).map_err(runtime)
}

#[derive(serde::Deserialize)]
struct DocumentInput {
    doc_id: String,
    #[serde(default)]
    source_kind: Option<SourceKind>,
    #[serde(default)]
    title: String,
    text: String,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

fn read_inputs(path: &Path, default_kind: SourceKind) -> Result<Vec<Document>, Failure> {
    let raw = std::fs::read(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    let text = normalize_bytes(&raw).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|x| x == "jsonl") {
        let mut docs = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let d: DocumentInput = serde_json::from_str(line)
                .map_err(|e| runtime(format!("{}: line {}: {e}", path.display(), i + 1)))?;
            docs.push(Document {
                doc_id: d.doc_id,
                source_kind: d.source_kind.unwrap_or(default_kind),
                title: d.title,
                text: d.text,
                metadata: d.metadata,
                revision: 0,
            });
        }
        Ok(docs)
    } else {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(vec![Document::new(stem.clone(), default_kind, stem, text)])
    }
}

fn ingest(settings: &Settings, a: IngestArgs) -> Result<(), Failure> {
    let rules = match &a.redaction_rules {
        Some(p) => load_rules(p).map_err(runtime)?,
        None => settings.rules().map_err(runtime)?,
    };
    let mut kb = KnowledgeBase::open(&a.kb, &settings.kb_id).map_err(runtime)?;
    let mut stdout = std::io::stdout().lock();
    for input in &a.inputs {
        for doc in read_inputs(input, a.source_kind)? {
            let doc_id = doc.doc_id.clone();
            let revision = kb.upsert(doc, &rules).map_err(|e| runtime(format!("{}: {e}", input.display())))?;
            let _ = writeln!(stdout, "{}", json!({ "doc_id": doc_id, "revision": revision }));
        }
    }
    tracing::info!(kb = %a.kb.display(), documents = kb.len(), kb_revision = kb.kb_revision(), "ingested");
    Ok(())
}

fn dump_chunks(settings: &Settings, kb: &Path, doc_id: &str) -> Result<(), Failure> {
    let kb = open_existing_kb(kb)?;
    let doc = kb.get(doc_id).ok_or_else(|| runtime(format!("unknown document `{doc_id}`")))?;
    let params = settings.chunking().map_err(runtime)?;
    let mut stdout = std::io::stdout().lock();
    for c in chunk_document(doc, &params).map_err(runtime)? {
        let line = json!({
            "chunk_id": c.chunk_id.to_string(),
            "token_span": [c.start_token, c.end_token],
            "doc_revision": c.doc_revision,
            "text": c.text,
        });
        let _ = writeln!(stdout, "{line}");
    }
    Ok(())
}

fn build_index(settings: &Settings, a: IndexArgs) -> Result<(), Failure> {
    let kb = open_existing_kb(&a.kb)?;
    let params = settings.chunking().map_err(runtime)?;
    let provider = settings.embedder().map_err(runtime)?;
    let snap = rebuild_index(&kb, &params, provider.as_ref()).map_err(runtime)?;
    snap.index().save(&a.out).map_err(runtime)?;
    tracing::info!(entries = snap.index().len(), watermark = snap.watermark(), out = %a.out.display(), "index written");
    Ok(())
}

fn distill(settings: &Settings, a: DistillArgs) -> Result<(), Failure> {
    let kb = open_existing_kb(&a.kb)?;
    let mut settings = settings.clone();
    if a.script.is_some() {
        settings.gen_script = a.script.clone();
    }
    let generators = settings.generators().map_err(runtime)?;
    let jobs = batch_jobs(kb.documents(), a.docs_per_batch as usize, a.pairs_per_batch as usize, a.min_grounding);
    let cfg = DistillConfig { parallelism: a.parallelism as usize, ..DistillConfig::default() };
    let (output, failure) = match run_distillation(&jobs, generators.base.as_ref(), &cfg) {
        Ok(out) => (out, None),
        Err(f) => {
            let msg = f.to_string();
            (f.partial, Some(msg))
        }
    };
    write_dataset(&a.out, &output.records).map_err(runtime)?;
    println!("{}", serde_json::to_string(&output.report).expect("report serializes"));
    match failure {
        None => Ok(()),
        Some(msg) => Err(Failure::Runtime(format!("{msg}; partial dataset written to {}", a.out.display()))),
    }
}

fn excerpt(text: &str, chars: usize) -> String {
    text.chars().take(chars).map(|c| if c == '\n' { ' ' } else { c }).collect()
}

fn query(settings: &Settings, a: QueryArgs) -> Result<(), Failure> {
    let kb = open_existing_kb(&a.kb)?;
    if !a.index.is_file() {
        return Err(Failure::Runtime(format!("index file {} not found; run `admitrag index` first", a.index.display())));
    }
    let index = VectorIndex::load(&a.index).map_err(runtime)?;
    let provider = settings.embedder().map_err(runtime)?;
    if index.dim() != provider.dim() {
        return Err(Failure::Runtime(format!(
            "index dimension {} does not match the embedding provider ({})",
            index.dim(),
            provider.dim()
        )));
    }
    let params = settings.chunking().map_err(runtime)?;
    let snap = RetrievalSnapshot::from_parts(index, &kb, params).map_err(runtime)?;
    let hits = snap.retrieve(provider.as_ref(), &a.text, SearchOptions::top(a.k as usize)).map_err(runtime)?;

    let draft = match a.config {
        None => None,
        Some(name) => {
            let generators = settings.generators().map_err(runtime)?;
            let config = PipelineConfig::new(name, &settings.models()).with_top_k(a.k as usize);
            let config = PipelineConfig { params: settings.gen_params(), ..config };
            let inquiry = Inquiry::new("cli-query", a.text.clone());
            let client = generators.for_class(name.model_class());
            Some(run_pipeline(&config, &inquiry, &snap, provider.as_ref(), client).map_err(runtime)?)
        }
    };

    let mut stdout = std::io::stdout().lock();
    match a.format {
        Format::Json => {
            let hits: Vec<_> = hits
                .iter()
                .map(|h| {
                    json!({
                        "rank": h.hit.rank,
                        "score": h.hit.score,
                        "chunk_id": h.hit.chunk_id,
                        "text": h.chunk.text,
                    })
                })
                .collect();
            let _ = writeln!(stdout, "{}", json!({ "hits": hits, "draft": draft }));
        }
        Format::Text => {
            for h in &hits {
                let _ = writeln!(
                    stdout,
                    "{}\t{:.4}\t{}\t{}",
                    h.hit.rank,
                    h.hit.score,
                    h.hit.chunk_id,
                    excerpt(&h.chunk.text, 120)
                );
            }
            if let Some(d) = draft {
                let _ = writeln!(stdout, "\n[{}]\n{}", d.config_name, d.response_text);
            }
        }
    }
    Ok(())
}

fn evaluate(settings: &Settings, a: EvaluateArgs) -> Result<(), Failure> {
    let now = chrono::Utc::now();
    let survey: Vec<SatisfactionEntry> = match &a.survey {
        Some(p) => read_jsonl(p).map_err(runtime)?,
        None => Vec::new(),
    };
    let report = if let Some(path) = &a.aggregates {
        if !path.is_file() {
            return Err(Failure::Usage(format!("aggregates file {} does not exist", path.display())));
        }
        let mut agg = Aggregates::load(path).map_err(runtime)?;
        agg.configs.retain(|name, _| a.configs.0.contains(name));
        agg.into_report(now)
    } else {
        let bench_path = a.benchmark.as_ref().expect("clap requires benchmark or aggregates");
        if !bench_path.is_file() {
            return Err(Failure::Usage(format!("benchmark file {} does not exist", bench_path.display())));
        }
        let benchmark = load_benchmark(bench_path).map_err(runtime)?;
        let runs = if a.live {
            let kb = open_existing_kb(a.kb.as_deref().expect("clap requires kb with live"))?;
            live_runs(settings, &kb, &benchmark, &a.configs.0, &a.out)?
        } else {
            let dir = a.responses_dir.as_ref().expect("clap requires a mode with benchmark");
            if !dir.is_dir() {
                return Err(Failure::Runtime(format!("responses directory {} not found", dir.display())));
            }
            load_runs(dir, &a.configs.0).map_err(runtime)?
        };
        let mut configs = BTreeMap::new();
        for (name, run) in &runs {
            configs.insert(*name, compute_metrics(run, &benchmark, &survey, *name).map_err(runtime)?);
        }
        let benchmark_id = bench_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        build_report(ReportMetadata { benchmark_id, case_count: benchmark.len(), timestamp: now }, configs)
    };
    write_report(&report, &a.out)?;
    let mut stdout = std::io::stdout().lock();
    match a.format {
        Format::Json => {
            let _ = writeln!(stdout, "{}", serde_json::to_string(&report).expect("report serializes"));
        }
        Format::Text => {
            let _ = write!(stdout, "{}", report.to_csv());
        }
    }
    Ok(())
}

/// Runs each configuration over the benchmark inquiries and saves the
/// responses under `<out>/responses/` so the run can be re-scored offline.
fn live_runs(
    settings: &Settings,
    kb: &KnowledgeBase,
    benchmark: &[crate::evaluation::BenchmarkCase],
    configs: &[PipelineName],
    out: &Path,
) -> Result<BTreeMap<PipelineName, ConfigRun>, Failure> {
    let provider = settings.embedder().map_err(runtime)?;
    let generators = settings.generators().map_err(runtime)?;
    let snap = rebuild_index(kb, &settings.chunking().map_err(runtime)?, provider.as_ref()).map_err(runtime)?;
    let dir = out.join("responses");
    std::fs::create_dir_all(&dir).map_err(runtime)?;
    let mut runs = BTreeMap::new();
    for &name in configs {
        let config = PipelineConfig::new(name, &settings.models()).with_top_k(settings.top_k);
        let config = PipelineConfig { params: settings.gen_params(), ..config };
        let client = generators.for_class(name.model_class());
        let mut responses = HashMap::new();
        let mut lines = String::new();
        for case in benchmark {
            let inquiry = Inquiry::new(case.inquiry_id.clone(), case.inquiry_text.clone());
            let draft = run_pipeline(&config, &inquiry, &snap, provider.as_ref(), client)
                .map_err(|e| runtime(format!("{name} on {}: {e}", case.inquiry_id)))?;
            let rec = ResponseRecord { inquiry_id: case.inquiry_id.clone(), response: draft.response_text };
            lines.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            lines.push('\n');
            responses.insert(rec.inquiry_id, rec.response);
        }
        std::fs::write(dir.join(format!("{}.jsonl", name.as_str())), lines).map_err(runtime)?;
        tracing::info!(config = %name, cases = benchmark.len(), "generated responses");
        runs.insert(name, ConfigRun { responses, judgments: judgments_map(Vec::<Judgment>::new()), ratings: Vec::new() });
    }
    Ok(runs)
}

fn write_report(report: &EvaluationReport, out: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(out).map_err(runtime)?;
    std::fs::write(out.join("report.csv"), report.to_csv()).map_err(runtime)?;
    std::fs::write(out.join("report.md"), report.to_markdown()).map_err(runtime)?;
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(out.join("report.json"), json).map_err(runtime)?;
    tracing::info!(out = %out.display(), "report written");
    Ok(())
}

fn serve(settings: Settings) -> Result<(), Failure> {
    let provider = settings.embedder().map_err(runtime)?;
    let generators = settings.generators().map_err(runtime)?;
    let state = AppState::open(settings, provider, generators).map_err(runtime)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(runtime)?;
    rt.block_on(service::serve(state)).map_err(runtime)
}
