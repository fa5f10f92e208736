//! One case through one configuration: optional coref, chunking, extraction,
//! graph build, evaluation. Every stage writes its output under the case
//! directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ConfigId, PipelineConfig, Settings};
use crate::coref::{resolve_document, CorefTemplates, CorefTrace};
use crate::error::{Error, IoContext, Result};
use crate::extraction::{
    extract_chunk, post_filter_entities, ExtractionPromptConfig, PromptVariant, RawEntityRecord,
    RawRelationshipRecord,
};
use crate::gateway::{BackendRegistry, CacheMode, Gateway, ReplayStore};
use crate::graph::{build_graph, export_graphml, KnowledgeGraph, TabularRegistry, TabularWriter};
use crate::ingest::{chunk_with, write_chunk_dump, CaseDocument, Chunk, Tokenizer, TokenizerRegistry};
use crate::lexicon::Lexicon;
use crate::metrics::{case_metrics, cluster_duplicates, score_noise, write_metrics_csv, CaseMetrics, DuplicateCluster, Overrides};

pub const COREF_DIR: &str = "coref";
pub const CHUNKS_FILE: &str = "chunks/chunks.jsonl";
pub const PROMPTS_DIR: &str = "prompts";
pub const RESPONSES_DIR: &str = "responses";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const EVALUATION_FILE: &str = "evaluation.json";

/// `<case_id>.<config_id>`, the stem of graph export files.
pub fn graph_stem(case_id: &str, config: ConfigId) -> String {
    format!("{case_id}.{config}")
}

pub fn graphml_file(case_id: &str, config: ConfigId) -> String {
    format!("{}.graphml", graph_stem(case_id, config))
}

/// Shared, read-only resources for a run.
pub struct Toolkit {
    pub settings: Settings,
    pub gateway: Gateway,
    pub coref_templates: CorefTemplates,
    pub structured: ExtractionPromptConfig,
    pub baseline: ExtractionPromptConfig,
    pub tokenizer: Arc<dyn Tokenizer>,
    pub noise_lexicon: Lexicon,
    pub government_lexicon: Lexicon,
    pub tabular: Arc<dyn TabularWriter>,
}

impl Toolkit {
    pub fn new(settings: Settings) -> Result<Self> {
        let gateway = build_gateway(&settings, &BackendRegistry::default())?;
        Self::with_gateway(settings, gateway)
    }

    /// Uses `gateway` as is; everything else comes from the settings.
    pub fn with_gateway(mut settings: Settings, gateway: Gateway) -> Result<Self> {
        settings.validate()?;
        settings.coref.model = settings.backend.model.clone();
        settings.extraction.model = settings.backend.model.clone();
        let coref_templates = match &settings.coref_templates {
            Some(dir) => CorefTemplates::load_dir(dir)?,
            None => CorefTemplates::defaults(),
        };
        let prompt = |path: &Option<PathBuf>, v: PromptVariant| -> Result<ExtractionPromptConfig> {
            let mut c = match path {
                Some(p) => ExtractionPromptConfig::load(p, settings.delimiters.clone())?,
                None => ExtractionPromptConfig::default_for(v),
            };
            if c.variant != v {
                return Err(Error::TemplateInvalid(format!("expected a {v} prompt, found {}", c.variant)));
            }
            c.delimiters = settings.delimiters.clone();
            c.validate()?;
            Ok(c)
        };
        let structured = prompt(&settings.structured_prompt, PromptVariant::Structured)?;
        let baseline = prompt(&settings.baseline_prompt, PromptVariant::Baseline)?;
        let lexicon = |p: &Option<PathBuf>, default: fn() -> Lexicon| match p {
            Some(p) => Lexicon::load(p),
            None => Ok(default()),
        };
        Ok(Toolkit {
            tokenizer: TokenizerRegistry::default().get(&settings.tokenizer)?,
            tabular: TabularRegistry::default().get(&settings.tabular)?,
            noise_lexicon: lexicon(&settings.noise_lexicon, Lexicon::default_noise)?,
            government_lexicon: lexicon(&settings.government_lexicon, Lexicon::default_government)?,
            coref_templates,
            structured,
            baseline,
            gateway,
            settings,
        })
    }

    pub fn prompt(&self, v: PromptVariant) -> &ExtractionPromptConfig {
        match v {
            PromptVariant::Structured => &self.structured,
            PromptVariant::Baseline => &self.baseline,
        }
    }
}

/// Backend from the registry, wrapped with the configured cache. Strict
/// replay needs no backend at all.
pub fn build_gateway(settings: &Settings, registry: &BackendRegistry) -> Result<Gateway> {
    let store = || -> Result<ReplayStore> {
        let dir = settings
            .cache_dir
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("record/replay needs a cache directory".into()))?;
        Ok(ReplayStore::open(dir)?)
    };
    let gw = match settings.cache_mode {
        CacheMode::StrictReplay => Gateway::replay_only(store()?),
        CacheMode::Record => Gateway::new(registry.build(&settings.backend)?).with_store(store()?, CacheMode::Record),
        CacheMode::Off => Gateway::new(registry.build(&settings.backend)?),
    };
    Ok(gw.with_retry(settings.retry))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).at(dir)
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(p) = path.parent() {
        ensure_dir(p)?;
    }
    fs::write(path, text).at(path)
}

// ---------------------------------------------------------------------------
// Stages

/// Seven coref passes. Writes each pass output, the final text and a trace
/// under `<case_dir>/coref/`.
pub fn coref_stage(case_id: &str, text: &str, kit: &Toolkit, case_dir: &Path) -> Result<(String, CorefTrace)> {
    let dir = case_dir.join(COREF_DIR);
    let mut settings = kit.settings.coref.clone();
    settings.persist_dir = Some(dir.clone());
    let (resolved, mut trace) = resolve_document(case_id, text, &kit.coref_templates, &kit.gateway, &settings)?;
    for p in &mut trace.per_pass {
        // keep the trace independent of where the run directory lives
        p.output_path = p.output_path.as_ref().and_then(|o| o.file_name()).map(PathBuf::from);
    }
    write(&dir.join(format!("{case_id}.resolved.txt")), &resolved)?;
    write(&dir.join(format!("{case_id}.trace.json")), &serde_json::to_string_pretty(&trace)?)?;
    Ok((resolved, trace))
}

pub fn chunk_stage(case_id: &str, text: &str, cfg: &PipelineConfig, kit: &Toolkit, case_dir: &Path) -> Result<Vec<Chunk>> {
    let chunks = chunk_with(kit.tokenizer.as_ref(), case_id, text, cfg.chunk_size, cfg.overlap)?;
    let path = case_dir.join(CHUNKS_FILE);
    ensure_dir(path.parent().expect("has parent"))?;
    write_chunk_dump(&chunks, &path)?;
    Ok(chunks)
}

#[derive(Debug, Clone, Default)]
pub struct ExtractionOutput {
    pub entities: Vec<RawEntityRecord>,
    pub relationships: Vec<RawRelationshipRecord>,
    pub warnings: Vec<String>,
    pub truncated_chunks: usize,
}

/// Extracts every chunk (in parallel), persisting each prompt and raw
/// response, then the parsed records.
pub fn extract_stage(
    case_id: &str,
    chunks: &[Chunk],
    variant: PromptVariant,
    kit: &Toolkit,
    case_dir: &Path,
) -> Result<ExtractionOutput> {
    let prompt = kit.prompt(variant);
    let results = chunks
        .par_iter()
        .map(|c| extract_chunk(c, prompt, &kit.gateway, &kit.settings.extraction))
        .collect::<Result<Vec<_>>>()?;
    let mut out = ExtractionOutput::default();
    for r in results {
        let k = r.chunk_id;
        write(&case_dir.join(PROMPTS_DIR).join(format!("{case_id}.chunk{k}.prompt.txt")), &r.prompt)?;
        write(
            &case_dir.join(RESPONSES_DIR).join(format!("{case_id}.chunk{k}.response.txt")),
            &r.response.text,
        )?;
        if r.response.truncated {
            out.truncated_chunks += 1;
            out.warnings.push(format!("chunk {k}: response lacks the completion marker"));
        }
        out.warnings
            .extend(r.outcome.warnings.into_iter().map(|w| format!("chunk {k}: {w}")));
        out.entities.extend(r.outcome.entities);
        out.relationships.extend(r.outcome.relationships);
    }
    let before = out.entities.len();
    out.entities = post_filter_entities(out.entities, &kit.government_lexicon, kit.settings.post_filter);
    if out.entities.len() < before {
        log::info!("{case_id}: post-filter dropped {} entities", before - out.entities.len());
    }
    write_records(&out.entities, &out.relationships, &case_dir.join(RECORDS_FILE))?;
    Ok(out)
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum RecordLine {
    Entity(RawEntityRecord),
    Relationship(RawRelationshipRecord),
}

/// One JSON object per line, tagged with `"kind"`.
pub fn write_records(entities: &[RawEntityRecord], rels: &[RawRelationshipRecord], path: &Path) -> Result<()> {
    let mut text = String::new();
    for e in entities {
        text.push_str(&serde_json::to_string(&RecordLine::Entity(e.clone()))?);
        text.push('\n');
    }
    for r in rels {
        text.push_str(&serde_json::to_string(&RecordLine::Relationship(r.clone()))?);
        text.push('\n');
    }
    write(path, &text)
}

pub fn read_records(path: &Path) -> Result<(Vec<RawEntityRecord>, Vec<RawRelationshipRecord>)> {
    let text = fs::read_to_string(path).at(path)?;
    let (mut ents, mut rels) = (Vec::new(), Vec::new());
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        match serde_json::from_str(line)? {
            RecordLine::Entity(e) => ents.push(e),
            RecordLine::Relationship(r) => rels.push(r),
        }
    }
    Ok((ents, rels))
}

/// Builds the graph and writes GraphML plus the tabular twin.
#[allow(clippy::too_many_arguments)]
pub fn build_stage(
    case_id: &str,
    config: ConfigId,
    entities: &[RawEntityRecord],
    rels: &[RawRelationshipRecord],
    chunk_count: usize,
    warning_count: usize,
    kit: &Toolkit,
    case_dir: &Path,
) -> Result<KnowledgeGraph> {
    let mut g = build_graph(entities, rels, case_id, config);
    g.metadata.chunk_count = chunk_count;
    g.metadata.warning_count = warning_count;
    write_graph(&g, kit, case_dir)?;
    Ok(g)
}

pub fn write_graph(g: &KnowledgeGraph, kit: &Toolkit, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let graphml = dir.join(graphml_file(&g.case_id, g.config_id));
    export_graphml(g, &graphml)?;
    let mut files = vec![graphml];
    files.extend(kit.tabular.write(g, dir, &graph_stem(&g.case_id, g.config_id))?);
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub metrics: CaseMetrics,
    pub clusters: Vec<DuplicateCluster>,
    pub noisy_ids: Vec<String>,
}

/// Clusters and noise for one graph, using the case's override file if any.
pub fn evaluate(g: &KnowledgeGraph, cfg: &PipelineConfig, kit: &Toolkit) -> Result<Evaluation> {
    let overrides = match cfg.overrides_path(&g.case_id) {
        Some(p) if p.exists() => Overrides::load(&p)?,
        _ => Overrides::default(),
    };
    let clusters = cluster_duplicates(g, cfg.threshold, &overrides)?;
    let noise = score_noise(g, &kit.noise_lexicon, &overrides)?;
    let metrics = case_metrics(g, &clusters, noise.noisy_count())?;
    Ok(Evaluation {
        metrics,
        clusters,
        noisy_ids: noise.noisy_ids,
    })
}

/// Evaluates and writes `metrics.csv` and `evaluation.json` into `dir`.
pub fn eval_stage(g: &KnowledgeGraph, cfg: &PipelineConfig, kit: &Toolkit, dir: &Path) -> Result<Evaluation> {
    let ev = evaluate(g, cfg, kit)?;
    ensure_dir(dir)?;
    write_metrics_csv(std::slice::from_ref(&ev.metrics), &dir.join(METRICS_FILE))?;
    write(&dir.join(EVALUATION_FILE), &serde_json::to_string_pretty(&ev)?)?;
    Ok(ev)
}

#[derive(Debug, Clone)]
pub struct CaseOutcome {
    pub case_id: String,
    pub config_id: ConfigId,
    pub graph: KnowledgeGraph,
    pub evaluation: Evaluation,
    pub coref_passes: usize,
    pub warnings: Vec<String>,
    /// Every file under the case directory, sorted.
    pub artifacts: Vec<PathBuf>,
}

/// Runs all stages for `doc` under `cfg`. The case directory is recreated
/// from scratch.
pub fn run_pipeline(doc: &CaseDocument, cfg: &PipelineConfig, kit: &Toolkit) -> Result<CaseOutcome> {
    cfg.validate()?;
    let case_id = doc.case_id.as_str();
    let dir = cfg.case_dir(case_id);
    if dir.exists() {
        fs::remove_dir_all(&dir).at(&dir)?;
    }
    ensure_dir(&dir)?;
    let mut warnings = doc.warnings.clone();

    let (text, coref_passes) = if cfg.coref_enabled {
        let (resolved, trace) = coref_stage(case_id, &doc.opinion_text, kit, &dir)?;
        warnings.extend(trace.per_pass.iter().flat_map(|p| p.warnings.iter().cloned()));
        (resolved, trace.per_pass.len())
    } else {
        (doc.opinion_text.clone(), 0)
    };

    let chunks = chunk_stage(case_id, &text, cfg, kit, &dir)?;
    let ex = extract_stage(case_id, &chunks, cfg.prompt_variant, kit, &dir)?;
    warnings.extend(ex.warnings.iter().cloned());
    let graph = build_stage(
        case_id,
        cfg.config_id,
        &ex.entities,
        &ex.relationships,
        chunks.len(),
        warnings.len(),
        kit,
        &dir,
    )?;
    let evaluation = eval_stage(&graph, cfg, kit, &dir)?;
    for w in &warnings {
        log::debug!("{case_id}/{}: {w}", cfg.config_id);
    }
    Ok(CaseOutcome {
        case_id: case_id.to_string(),
        config_id: cfg.config_id,
        graph,
        evaluation,
        coref_passes,
        warnings,
        artifacts: list_files(&dir)?,
    })
}

/// All regular files below `dir`, sorted.
pub fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).at(&d)? {
            let p = e.at(&d)?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}
