//! Corpus-level driver: every case under every selected configuration, then
//! combined metrics, report tables and a run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ConfigId, PipelineConfig, Settings};
use super::pipeline::{list_files, run_pipeline, CaseOutcome, Toolkit, METRICS_FILE};
use super::report::write_reports;
use crate::error::{Error, IoContext, Result};
use crate::ingest::{extract_opinion, load_corpus, CaseDocument};
use crate::metrics::{read_metrics_csv, write_metrics_csv, CaseMetrics};
use crate::util::text_digest;

pub const INGEST_DIR: &str = "ingest";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Default)]
pub struct PreparedCorpus {
    pub documents: Vec<CaseDocument>,
    /// (file, reason) for inputs that could not be loaded.
    pub failures: Vec<(PathBuf, String)>,
}

impl PreparedCorpus {
    /// SHA-256 over case ids and opinion texts in case order.
    pub fn digest(&self) -> String {
        corpus_digest(&self.documents)
    }
}

pub fn corpus_digest(docs: &[CaseDocument]) -> String {
    let mut acc = String::new();
    for d in docs {
        acc.push_str(&d.case_id);
        acc.push('\0');
        acc.push_str(&text_digest(&d.opinion_text));
        acc.push('\n');
    }
    text_digest(&acc)
}

/// Loads a corpus directory and isolates opinion sections unless the
/// settings say the files are already opinions.
pub fn prepare_corpus(dir: &Path, settings: &Settings) -> Result<PreparedCorpus> {
    let load = load_corpus(dir, settings.manifest.as_deref())?;
    let documents: Vec<CaseDocument> = load
        .documents
        .into_iter()
        .map(|d| if settings.pre_extracted { d } else { extract_opinion(d, &settings.section_markers) })
        .collect();
    if documents.is_empty() {
        return Err(Error::CorpusEmpty(dir.to_path_buf()));
    }
    Ok(PreparedCorpus { documents, failures: load.failures })
}

/// `<dir>/<case>.opinion.txt` for each document; all configurations read the
/// same texts.
pub fn write_opinions(docs: &[CaseDocument], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).at(dir)?;
    docs.iter()
        .map(|d| {
            let p = dir.join(format!("{}.opinion.txt", d.case_id));
            fs::write(&p, &d.opinion_text).at(&p)?;
            Ok(p)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseFailure {
    pub case_id: String,
    pub config_id: ConfigId,
    pub kind: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ConfigRun {
    pub config_id: ConfigId,
    /// Successful cases in corpus order.
    pub outcomes: Vec<(CaseOutcome, f64)>,
    pub failures: Vec<CaseFailure>,
}

impl ConfigRun {
    pub fn metrics(&self) -> Vec<CaseMetrics> {
        self.outcomes.iter().map(|(o, _)| o.evaluation.metrics.clone()).collect()
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

/// Runs one configuration over all documents, up to `settings.workers` cases
/// at a time. Failing cases are recorded unless `fail_fast` is set.
pub fn run_config(docs: &[CaseDocument], config: ConfigId, kit: &Toolkit) -> Result<ConfigRun> {
    let cfg = PipelineConfig::new(config, &kit.settings);
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir).at(&cfg.out_dir)?;
    let results: Vec<(Result<CaseOutcome>, f64)> = pool(kit.settings.workers)?.install(|| {
        docs.par_iter()
            .map(|d| {
                let t = Instant::now();
                let r = run_pipeline(d, &cfg, kit);
                (r, t.elapsed().as_secs_f64())
            })
            .collect()
    });
    let mut run = ConfigRun { config_id: config, outcomes: Vec::new(), failures: Vec::new() };
    for (doc, (r, secs)) in docs.iter().zip(results) {
        match r {
            Ok(o) => run.outcomes.push((o, secs)),
            Err(e) if kit.settings.fail_fast => return Err(e),
            Err(e) => {
                log::warn!("{}/{config}: {e}", doc.case_id);
                run.failures.push(CaseFailure {
                    case_id: doc.case_id.clone(),
                    config_id: config,
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                });
            }
        }
    }
    write_metrics_csv(&run.metrics(), &cfg.out_dir.join(METRICS_FILE))?;
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEntry {
    pub case_id: String,
    pub config_id: ConfigId,
    pub coref_passes: usize,
    pub warning_count: usize,
    pub seconds: f64,
    /// Relative to the run directory.
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub configs: Vec<ConfigId>,
    pub corpus_digest: String,
    pub case_count: usize,
    pub ingest_artifacts: Vec<String>,
    pub cases: Vec<CaseEntry>,
    pub reports: Vec<String>,
    /// Total warnings per configuration.
    pub warning_summary: BTreeMap<ConfigId, usize>,
    pub ingest_failures: Vec<(String, String)>,
    pub failures: Vec<CaseFailure>,
    pub started_unix: u64,
    pub elapsed_seconds: f64,
}

impl RunManifest {
    /// Paths listed in the manifest that are not on disk under `run_dir`.
    pub fn missing_artifacts(&self, run_dir: &Path) -> Vec<String> {
        self.ingest_artifacts
            .iter()
            .chain(self.cases.iter().flat_map(|c| c.artifacts.iter()))
            .chain(self.reports.iter())
            .filter(|p| !run_dir.join(p).is_file())
            .cloned()
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path).at(path)?)?)
    }
}

#[derive(Debug)]
pub struct AblationRun {
    pub run_dir: PathBuf,
    pub manifest: RunManifest,
    pub metrics: Vec<CaseMetrics>,
    pub runs: Vec<ConfigRun>,
}

fn relative(root: &Path, p: &Path) -> String {
    p.strip_prefix(root).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

/// Runs every selected configuration over `corpus`, writes the combined
/// `metrics.csv`, the report tables and `manifest.json` into the run
/// directory.
pub fn run_ablation(corpus: &PreparedCorpus, kit: &Toolkit) -> Result<AblationRun> {
    let started = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let settings = &kit.settings;
    if corpus.documents.is_empty() {
        return Err(Error::CorpusEmpty(PathBuf::new()));
    }
    let run_dir = settings.run_dir();
    fs::create_dir_all(&run_dir).at(&run_dir)?;
    let ingest = write_opinions(&corpus.documents, &run_dir.join(INGEST_DIR))?;

    let mut runs = Vec::new();
    for &c in &settings.configs {
        log::info!("running {c} over {} cases", corpus.documents.len());
        runs.push(run_config(&corpus.documents, c, kit)?);
    }
    let metrics: Vec<CaseMetrics> = runs.iter().flat_map(ConfigRun::metrics).collect();
    let reports = write_report_set(&metrics, settings, &run_dir)?;

    let mut cases = Vec::new();
    let mut warning_summary = BTreeMap::new();
    let mut failures = Vec::new();
    for r in &runs {
        let mut warn = 0;
        for (o, secs) in &r.outcomes {
            warn += o.warnings.len();
            cases.push(CaseEntry {
                case_id: o.case_id.clone(),
                config_id: o.config_id,
                coref_passes: o.coref_passes,
                warning_count: o.warnings.len(),
                seconds: *secs,
                artifacts: o.artifacts.iter().map(|p| relative(&run_dir, p)).collect(),
            });
        }
        warning_summary.insert(r.config_id, warn);
        failures.extend(r.failures.iter().cloned());
    }
    let manifest = RunManifest {
        run_id: settings.run_id.clone(),
        configs: settings.configs.clone(),
        corpus_digest: corpus.digest(),
        case_count: corpus.documents.len(),
        ingest_artifacts: ingest.iter().map(|p| relative(&run_dir, p)).collect(),
        cases,
        reports: reports.iter().map(|p| relative(&run_dir, p)).collect(),
        warning_summary,
        ingest_failures: corpus
            .failures
            .iter()
            .map(|(p, why)| (p.display().to_string(), why.clone()))
            .collect(),
        failures,
        started_unix,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    };
    let missing = manifest.missing_artifacts(&run_dir);
    debug_assert!(missing.is_empty(), "manifest lists missing files: {missing:?}");
    let path = run_dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).at(&path)?;
    Ok(AblationRun { run_dir, manifest, metrics, runs })
}

/// Combined `metrics.csv` plus the three report tables.
pub fn write_report_set(metrics: &[CaseMetrics], settings: &Settings, run_dir: &Path) -> Result<Vec<PathBuf>> {
    let combined = run_dir.join(METRICS_FILE);
    write_metrics_csv(metrics, &combined)?;
    let mut files = vec![combined];
    files.extend(write_reports(metrics, settings.averaging, run_dir)?);
    Ok(files)
}

/// Re-renders the report tables from a stored `metrics.csv` into `out_dir`.
pub fn rerender_reports(metrics_csv: &Path, settings: &Settings, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let metrics = read_metrics_csv(metrics_csv)?;
    write_reports(&metrics, settings.averaging, out_dir)
}

/// Every file under the run directory except the manifest, which alone
/// carries timing.
pub fn deterministic_files(run_dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(list_files(run_dir)?
        .into_iter()
        .filter(|p| p.file_name().is_none_or(|n| n != MANIFEST_FILE))
        .collect())
}
