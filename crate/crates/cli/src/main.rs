use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use casegraph_core::coref::PassFailurePolicy;
use casegraph_core::gateway::CacheMode;
use casegraph_core::graph::import_graphml;
use casegraph_core::ingest::{read_chunk_dump, CaseDocument};
use casegraph_core::runner::ablation::{
    prepare_corpus, rerender_reports, run_ablation, run_config, write_opinions, CaseFailure, INGEST_DIR,
};
use casegraph_core::runner::pipeline::{
    build_stage, chunk_stage, coref_stage, eval_stage, extract_stage, read_records, CHUNKS_FILE, METRICS_FILE,
    RECORDS_FILE,
};
use casegraph_core::runner::{run_pipeline, ConfigId, PipelineConfig, Settings, Toolkit};
use casegraph_core::Error;

/// Knowledge graphs from legal case text, with duplication and noise metrics.
#[derive(Parser, Debug)]
#[command(name = "casegraph", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// INI config file; CASEGRAPH_<SECTION>_<KEY> variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root of the run directories.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    run_id: Option<String>,
    /// Completion backend: mock, echo, scripted, ollama, openai.
    #[arg(long, global = true)]
    backend: Option<String>,
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    mock_rules: Option<PathBuf>,
    /// Response fixtures for the scripted and mock backends.
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,
    /// Record every completion into DIR, serving hits from it.
    #[arg(long, global = true, value_name = "DIR", conflicts_with = "replay")]
    record: Option<PathBuf>,
    /// Serve completions only from DIR; a miss fails the case.
    #[arg(long, global = true, value_name = "DIR")]
    replay: Option<PathBuf>,
    /// Abort on the first failing case or coref pass.
    #[arg(long, global = true)]
    strict: bool,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Isolate opinion sections of a corpus.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Seven type-ordered coreference passes over one document.
    Coref {
        #[command(flatten)]
        case: CaseArgs,
    },
    /// Chunk a document and extract entity/relationship records.
    Extract {
        #[command(flatten)]
        case: CaseArgs,
    },
    /// Build a graph from stored records.
    Build {
        /// records.jsonl; defaults to the case directory's.
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        case_id: String,
        #[arg(long, default_value = "corekg")]
        variant: ConfigId,
    },
    /// Metrics for a stored graph.
    Eval {
        #[arg(long)]
        graph: PathBuf,
    },
    /// One configuration end to end.
    Run {
        #[arg(long, default_value = "corekg")]
        variant: ConfigId,
        #[command(flatten)]
        source: Source,
    },
    /// All configurations over a corpus, then the report tables.
    Ablate {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Re-render report tables from a stored metrics.csv.
    Report {
        /// Defaults to the run directory's metrics.csv.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Defaults to the directory holding the metrics file.
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct CaseArgs {
    /// Plain-text document.
    #[arg(long)]
    input: PathBuf,
    /// Defaults to the file name up to its first dot.
    #[arg(long)]
    case_id: Option<String>,
    #[arg(long, default_value = "corekg")]
    variant: ConfigId,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct Source {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(Value::Null) => ExitCode::SUCCESS,
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
            ExitCode::SUCCESS
        }
        Err(Failure { kind, message, detail }) => {
            let mut v = json!({ "error": kind, "message": message });
            if let Some(d) = detail {
                v["details"] = d;
            }
            eprintln!("{v}");
            ExitCode::FAILURE
        }
    }
}

struct Failure {
    kind: String,
    message: String,
    detail: Option<Value>,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { kind: e.kind().to_string(), message: e.to_string(), detail: None }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { kind: "io".into(), message: e.to_string(), detail: None }
    }
}

fn case_failures(fs: &[CaseFailure]) -> Failure {
    let first = &fs[0];
    Failure {
        kind: first.kind.clone(),
        message: format!("{} case run(s) failed; first: {}/{}: {}", fs.len(), first.case_id, first.config_id, first.message),
        detail: Some(serde_json::to_value(fs).expect("json")),
    }
}

fn settings(g: &Global) -> Result<Settings, Error> {
    let mut s = Settings::load(g.config.as_deref())?;
    if let Some(o) = &g.out {
        s.out_dir = o.clone();
    }
    if let Some(r) = &g.run_id {
        s.run_id = r.clone();
    }
    if let Some(b) = &g.backend {
        s.backend.backend = b.clone();
    }
    if let Some(m) = &g.model {
        s.backend.model = m.clone();
    }
    if let Some(p) = &g.mock_rules {
        s.backend.mock_rules = Some(p.clone());
    }
    if let Some(p) = &g.fixtures {
        s.backend.fixtures_dir = Some(p.clone());
    }
    if let Some(d) = &g.record {
        s.cache_mode = CacheMode::Record;
        s.cache_dir = Some(d.clone());
    }
    if let Some(d) = &g.replay {
        s.cache_mode = CacheMode::StrictReplay;
        s.cache_dir = Some(d.clone());
    }
    if g.strict {
        s.fail_fast = true;
        s.coref.failure_policy = PassFailurePolicy::FailRun;
    }
    if let Some(w) = g.workers {
        s.workers = w;
    }
    s.validate()?;
    Ok(s)
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn read_document(case: &CaseArgs) -> Result<CaseDocument, Failure> {
    let text = fs::read_to_string(&case.input).map_err(|e| Error::io(&case.input, e))?;
    let id = match &case.case_id {
        Some(id) => id.clone(),
        None => case
            .input
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.split('.').next())
            .filter(|n| !n.is_empty())
            .ok_or_else(|| Error::InvalidConfig(format!("cannot derive a case id from {}", case.input.display())))?
            .to_string(),
    };
    Ok(CaseDocument::pre_extracted(id, text))
}

fn run(cli: Cli) -> Result<Value, Failure> {
    let s = settings(&cli.global)?;
    match cli.command {
        Command::Ingest { corpus } => {
            let c = prepare_corpus(&corpus, &s)?;
            let files = write_opinions(&c.documents, &s.run_dir().join(INGEST_DIR))?;
            Ok(json!({
                "cases": c.documents.len(),
                "corpus_digest": c.digest(),
                "files": files.iter().map(|p| path_str(p)).collect::<Vec<_>>(),
                "failures": c.failures.iter().map(|(p, why)| json!([path_str(p), why])).collect::<Vec<_>>(),
                "warnings": c.documents.iter().flat_map(|d| d.warnings.clone()).collect::<Vec<_>>(),
            }))
        }
        Command::Coref { case } => {
            if !case.variant.coref_enabled() {
                return Err(Error::InvalidConfig(format!("{} runs without coreference", case.variant)).into());
            }
            let doc = read_document(&case)?;
            let kit = Toolkit::new(s)?;
            let dir = PipelineConfig::new(case.variant, &kit.settings).case_dir(&doc.case_id);
            let (_, trace) = coref_stage(&doc.case_id, &doc.opinion_text, &kit, &dir)?;
            Ok(json!({
                "case_id": doc.case_id,
                "passes": trace.per_pass.len(),
                "warnings": trace.warning_count(),
                "dir": path_str(&dir.join(casegraph_core::runner::pipeline::COREF_DIR)),
            }))
        }
        Command::Extract { case } => {
            let doc = read_document(&case)?;
            let kit = Toolkit::new(s)?;
            let cfg = PipelineConfig::new(case.variant, &kit.settings);
            let dir = cfg.case_dir(&doc.case_id);
            let chunks = chunk_stage(&doc.case_id, &doc.opinion_text, &cfg, &kit, &dir)?;
            let ex = extract_stage(&doc.case_id, &chunks, cfg.prompt_variant, &kit, &dir)?;
            Ok(json!({
                "case_id": doc.case_id,
                "chunks": chunks.len(),
                "entities": ex.entities.len(),
                "relationships": ex.relationships.len(),
                "warnings": ex.warnings,
                "records": path_str(&dir.join(RECORDS_FILE)),
            }))
        }
        Command::Build { records, case_id, variant } => {
            let kit = Toolkit::new(s)?;
            let dir = PipelineConfig::new(variant, &kit.settings).case_dir(&case_id);
            let records = records.unwrap_or_else(|| dir.join(RECORDS_FILE));
            let (ents, rels) = read_records(&records)?;
            let chunks_path = records.parent().unwrap_or(Path::new(".")).join(CHUNKS_FILE);
            let chunk_count = if chunks_path.exists() { read_chunk_dump(&chunks_path)?.len() } else { 0 };
            let g = build_stage(&case_id, variant, &ents, &rels, chunk_count, 0, &kit, &dir)?;
            Ok(json!({
                "case_id": case_id,
                "nodes": g.node_count(),
                "edges": g.edge_count(),
                "dir": path_str(&dir),
            }))
        }
        Command::Eval { graph } => {
            let g = import_graphml(&graph)?;
            let kit = Toolkit::new(s)?;
            let cfg = PipelineConfig::new(g.config_id, &kit.settings);
            let dir = graph.parent().unwrap_or(Path::new(".")).to_path_buf();
            let ev = eval_stage(&g, &cfg, &kit, &dir)?;
            let csv = fs::read_to_string(dir.join(METRICS_FILE))?;
            log::info!("{}: {} clusters, {} noisy", ev.metrics.case_id, ev.clusters.len(), ev.noisy_ids.len());
            print!("{csv}");
            Ok(Value::Null)
        }
        Command::Run { variant, source } => {
            let kit = Toolkit::new(s)?;
            if let Some(input) = source.input {
                let doc = read_document(&CaseArgs { input, case_id: None, variant })?;
                let cfg = PipelineConfig::new(variant, &kit.settings);
                let o = run_pipeline(&doc, &cfg, &kit)?;
                let m = &o.evaluation.metrics;
                return Ok(json!({
                    "case_id": o.case_id,
                    "config_id": variant,
                    "nodes": m.total_nodes,
                    "duplicates": m.duplicate_count,
                    "noisy": m.noisy_count,
                    "relationships": m.relationship_count,
                    "coref_passes": o.coref_passes,
                    "dir": path_str(&cfg.case_dir(&o.case_id)),
                }));
            }
            let corpus = prepare_corpus(source.corpus.as_deref().expect("clap group"), &kit.settings)?;
            let r = run_config(&corpus.documents, variant, &kit)?;
            if !r.failures.is_empty() {
                return Err(case_failures(&r.failures));
            }
            Ok(json!({
                "config_id": variant,
                "cases": r.outcomes.len(),
                "dir": path_str(&PipelineConfig::new(variant, &kit.settings).out_dir),
            }))
        }
        Command::Ablate { corpus } => {
            let kit = Toolkit::new(s)?;
            let corpus = prepare_corpus(&corpus, &kit.settings)?;
            let run = run_ablation(&corpus, &kit)?;
            if !run.manifest.failures.is_empty() {
                return Err(case_failures(&run.manifest.failures));
            }
            Ok(json!({
                "run_dir": path_str(&run.run_dir),
                "configs": run.manifest.configs,
                "cases": run.manifest.case_count,
                "reports": run.manifest.reports,
            }))
        }
        Command::Report { metrics, dir } => {
            let metrics = metrics.unwrap_or_else(|| s.run_dir().join(METRICS_FILE));
            let dir = dir.unwrap_or_else(|| metrics.parent().unwrap_or(Path::new(".")).to_path_buf());
            let files = rerender_reports(&metrics, &s, &dir)?;
            Ok(json!({ "reports": files.iter().map(|p| path_str(p)).collect::<Vec<_>>() }))
        }
    }
}
