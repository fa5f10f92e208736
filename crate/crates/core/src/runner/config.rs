//! Run settings and the per-configuration pipeline switches.
//!
//! Settings come from an INI-style file (`[section]` headers, `key = value`
//! lines, `;` or `#` comments). Any key can be overridden through the
//! environment as `CASEGRAPH_<SECTION>_<KEY>`, e.g. `CASEGRAPH_GATEWAY_BACKEND`.
//! Relative paths in a file resolve against the file's directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use ini::Ini;
use serde::{Deserialize, Serialize};

use crate::coref::{CorefSettings, PassFailurePolicy};
use crate::entity::EntityType;
use crate::error::{Error, Result};
use crate::extraction::{Delimiters, ExtractionSettings, PromptVariant, TypeMode};
use crate::gateway::{BackendSettings, CacheMode, RetryPolicy};
use crate::ingest::{SectionMarkers, DEFAULT_CHUNK_SIZE, DEFAULT_OVERLAP};
use crate::metrics::{AveragingMode, DEFAULT_THRESHOLD};

pub const ENV_PREFIX: &str = "CASEGRAPH_";
pub const SECTIONS: [&str; 7] = ["ingest", "chunking", "gateway", "coref", "extraction", "metrics", "run"];

/// The four ablation configurations, in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfigId {
    Graphrag,
    NoCoref,
    NoStructprompt,
    Corekg,
}

impl ConfigId {
    pub const ALL: [ConfigId; 4] = [
        ConfigId::Graphrag,
        ConfigId::NoCoref,
        ConfigId::NoStructprompt,
        ConfigId::Corekg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConfigId::Graphrag => "graphrag",
            ConfigId::NoCoref => "no_coref",
            ConfigId::NoStructprompt => "no_structprompt",
            ConfigId::Corekg => "corekg",
        }
    }

    /// Column heading used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ConfigId::Graphrag => "GraphRAG",
            ConfigId::NoCoref => "CoreKG-no-coref",
            ConfigId::NoStructprompt => "CoreKG-no-structprompt",
            ConfigId::Corekg => "CoreKG",
        }
    }

    pub fn coref_enabled(self) -> bool {
        matches!(self, ConfigId::NoStructprompt | ConfigId::Corekg)
    }

    pub fn prompt_variant(self) -> PromptVariant {
        match self {
            ConfigId::NoCoref | ConfigId::Corekg => PromptVariant::Structured,
            ConfigId::Graphrag | ConfigId::NoStructprompt => PromptVariant::Baseline,
        }
    }
}

impl fmt::Display for ConfigId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConfigId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let k = s.trim().to_ascii_lowercase().replace('-', "_");
        ConfigId::ALL
            .into_iter()
            .find(|c| c.as_str() == k)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown configuration {s:?}")))
    }
}

/// Everything a run needs to know, independent of the configuration.
#[derive(Debug, Clone)]
pub struct Settings {
    pub manifest: Option<PathBuf>,
    /// Treat input files as already holding only the Opinion section.
    pub pre_extracted: bool,
    pub section_markers: SectionMarkers,

    pub chunk_size: usize,
    pub overlap: usize,
    pub tokenizer: String,

    pub backend: BackendSettings,
    pub retry: RetryPolicy,
    pub cache_mode: CacheMode,
    pub cache_dir: Option<PathBuf>,

    pub coref: CorefSettings,
    pub coref_templates: Option<PathBuf>,

    pub structured_prompt: Option<PathBuf>,
    pub baseline_prompt: Option<PathBuf>,
    pub delimiters: Delimiters,
    pub extraction: ExtractionSettings,
    pub post_filter: bool,
    pub government_lexicon: Option<PathBuf>,

    pub threshold: f64,
    pub noise_lexicon: Option<PathBuf>,
    /// Holds `<case_id>.<config_id>.overrides` files.
    pub overrides_dir: Option<PathBuf>,
    pub averaging: AveragingMode,

    pub out_dir: PathBuf,
    pub run_id: String,
    /// 0 lets the thread pool decide.
    pub workers: usize,
    pub tabular: String,
    pub configs: Vec<ConfigId>,
    /// Abort the corpus run on the first failing case.
    pub fail_fast: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            manifest: None,
            pre_extracted: false,
            section_markers: SectionMarkers::default(),
            chunk_size: DEFAULT_CHUNK_SIZE,
            overlap: DEFAULT_OVERLAP,
            tokenizer: "whitespace".into(),
            backend: BackendSettings::default(),
            retry: RetryPolicy::default(),
            cache_mode: CacheMode::Off,
            cache_dir: None,
            coref: CorefSettings::default(),
            coref_templates: None,
            structured_prompt: None,
            baseline_prompt: None,
            delimiters: Delimiters::default(),
            extraction: ExtractionSettings::default(),
            post_filter: false,
            government_lexicon: None,
            threshold: DEFAULT_THRESHOLD,
            noise_lexicon: None,
            overrides_dir: None,
            averaging: AveragingMode::Reported,
            out_dir: PathBuf::from("runs"),
            run_id: "default".into(),
            workers: 0,
            tabular: "csv".into(),
            configs: ConfigId::ALL.to_vec(),
            fail_fast: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::InvalidConfig(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

fn opt_path(v: &str, base: &Path) -> Option<PathBuf> {
    let v = v.trim();
    (!v.is_empty()).then(|| base.join(v))
}

impl Settings {
    /// Defaults, then the file (if any), then `CASEGRAPH_*` variables.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut s = Settings::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let base = p.parent().unwrap_or(Path::new(""));
            s.apply_ini(&text, base)?;
        }
        s.apply_env()?;
        Ok(s)
    }

    pub fn apply_ini(&mut self, text: &str, base: &Path) -> Result<()> {
        let ini = Ini::load_from_str_noescape(text)
            .map_err(|e| Error::InvalidConfig(format!("config syntax: {e}")))?;
        for (section, props) in ini.iter() {
            for (k, v) in props.iter() {
                match section {
                    Some(sec) => self.set(sec, k, v, base)?,
                    None => {
                        return Err(Error::InvalidConfig(format!("key {k:?} outside any section")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn apply_env(&mut self) -> Result<()> {
        let vars: Vec<(String, String)> = std::env::vars().collect();
        self.apply_env_from(&vars)
    }

    /// Applies `CASEGRAPH_<SECTION>_<KEY>` pairs; other variables are ignored.
    pub fn apply_env_from(&mut self, vars: &[(String, String)]) -> Result<()> {
        let mut vars: Vec<&(String, String)> = vars.iter().collect();
        vars.sort();
        for (name, value) in &vars {
            let Some(rest) = name.strip_prefix(ENV_PREFIX) else { continue };
            let rest = rest.to_ascii_lowercase();
            let Some(sec) = SECTIONS.iter().find(|s| rest.starts_with(&format!("{s}_"))) else {
                continue;
            };
            let key = &rest[sec.len() + 1..];
            self.set(sec, key, value, Path::new(""))?;
        }
        self.backend
            .apply_env_from(|k| vars.iter().find(|(n, _)| n == k).map(|(_, v)| v.clone()));
        Ok(())
    }

    /// Sets one `section.key`.
    pub fn set(&mut self, section: &str, key: &str, v: &str, base: &Path) -> Result<()> {
        let section = section.trim().to_ascii_lowercase();
        let key = key.trim().to_ascii_lowercase();
        let k = format!("{section}.{key}");
        let k = k.as_str();
        match k {
            "ingest.manifest" => self.manifest = opt_path(v, base),
            "ingest.pre_extracted" => self.pre_extracted = parse_bool(k, v)?,
            "ingest.start_headings" => self.section_markers.start_headings = list(v),
            "ingest.end_headings" => self.section_markers.end_headings = list(v),

            "chunking.size" => self.chunk_size = parse(k, v)?,
            "chunking.overlap" => self.overlap = parse(k, v)?,
            "chunking.tokenizer" => self.tokenizer = v.trim().to_string(),

            "gateway.backend" => self.backend.backend = v.trim().to_string(),
            "gateway.base_url" => self.backend.base_url = v.trim().to_string(),
            "gateway.path" => self.backend.path = Some(v.trim().to_string()).filter(|p| !p.is_empty()),
            "gateway.model" => self.backend.model = v.trim().to_string(),
            "gateway.auth_header" => self.backend.auth_header = v.trim().to_string(),
            "gateway.timeout_secs" => self.backend.timeout = Duration::from_secs(parse(k, v)?),
            "gateway.mock_rules" => self.backend.mock_rules = opt_path(v, base),
            "gateway.fixtures" => self.backend.fixtures_dir = opt_path(v, base),
            "gateway.attempts" => self.retry.attempts = parse(k, v)?,
            "gateway.backoff_ms" => self.retry.initial_backoff = Duration::from_millis(parse(k, v)?),
            "gateway.backoff_multiplier" => self.retry.multiplier = parse(k, v)?,
            "gateway.cache" => {
                self.cache_mode = match v.trim().to_ascii_lowercase().replace('_', "-").as_str() {
                    "off" | "none" => CacheMode::Off,
                    "record" => CacheMode::Record,
                    "replay" | "strict-replay" => CacheMode::StrictReplay,
                    _ => return Err(Error::InvalidConfig(format!("{k}: unknown cache mode {v:?}"))),
                }
            }
            "gateway.cache_dir" => self.cache_dir = opt_path(v, base),

            "coref.failure_policy" => {
                self.coref.failure_policy = match v.trim().to_ascii_lowercase().replace('_', "-").as_str() {
                    "keep-previous" => PassFailurePolicy::KeepPrevious,
                    "fail-run" => PassFailurePolicy::FailRun,
                    _ => return Err(Error::InvalidConfig(format!("{k}: unknown policy {v:?}"))),
                }
            }
            "coref.context_budget" => self.coref.context_budget = parse(k, v)?,
            "coref.max_output" => self.coref.max_output = parse(k, v)?,
            "coref.templates" => self.coref_templates = opt_path(v, base),

            "extraction.structured_prompt" => self.structured_prompt = opt_path(v, base),
            "extraction.baseline_prompt" => self.baseline_prompt = opt_path(v, base),
            "extraction.field_sep" => self.delimiters.field_sep = v.trim().to_string(),
            "extraction.record_sep" => self.delimiters.record_sep = v.trim().to_string(),
            "extraction.completion_marker" => self.delimiters.completion_marker = v.trim().to_string(),
            "extraction.max_output" => self.extraction.max_output = parse(k, v)?,
            "extraction.type_mode" => {
                let v = v.trim();
                self.extraction.type_mode = if v.eq_ignore_ascii_case("strict") {
                    TypeMode::Strict
                } else if let Some(t) = v.strip_prefix("lenient:").or_else(|| v.strip_prefix("lenient :")) {
                    TypeMode::Lenient(
                        EntityType::parse(t)
                            .ok_or_else(|| Error::InvalidConfig(format!("{k}: unknown type {t:?}")))?,
                    )
                } else {
                    return Err(Error::InvalidConfig(format!("{k}: expected strict or lenient:<TYPE>")));
                }
            }
            "extraction.post_filter" => self.post_filter = parse_bool(k, v)?,
            "extraction.government_lexicon" => self.government_lexicon = opt_path(v, base),

            "metrics.threshold" => self.threshold = parse(k, v)?,
            "metrics.noise_lexicon" => self.noise_lexicon = opt_path(v, base),
            "metrics.overrides_dir" => self.overrides_dir = opt_path(v, base),
            "metrics.averaging" => {
                self.averaging = match v.trim().to_ascii_lowercase().replace('-', "_").as_str() {
                    "reported" => AveragingMode::Reported,
                    "full_precision" | "full" => AveragingMode::FullPrecision,
                    _ => return Err(Error::InvalidConfig(format!("{k}: unknown averaging {v:?}"))),
                }
            }

            "run.out" | "run.out_dir" => self.out_dir = base.join(v.trim()),
            "run.run_id" => self.run_id = v.trim().to_string(),
            "run.workers" => self.workers = parse(k, v)?,
            "run.tabular" => self.tabular = v.trim().to_string(),
            "run.configs" => {
                self.configs = list(v).iter().map(|c| c.parse()).collect::<Result<_>>()?;
            }
            "run.fail_fast" => self.fail_fast = parse_bool(k, v)?,
            _ => return Err(Error::InvalidConfig(format!("unknown setting {k}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_size == 0 || self.overlap >= self.chunk_size {
            return Err(Error::InvalidConfig(format!(
                "chunk size {} must exceed overlap {}",
                self.chunk_size, self.overlap
            )));
        }
        if !(self.threshold > 0.0 && self.threshold <= 100.0) {
            return Err(Error::InvalidConfig(format!("threshold {} outside (0, 100]", self.threshold)));
        }
        if self.configs.is_empty() {
            return Err(Error::InvalidConfig("no configurations selected".into()));
        }
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) {
            return Err(Error::InvalidConfig(format!("bad run id {:?}", self.run_id)));
        }
        self.delimiters.validate()
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(&self.run_id)
    }
}

/// Switches for one configuration. `coref_enabled` and `prompt_variant` are
/// fixed by `config_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub config_id: ConfigId,
    pub coref_enabled: bool,
    pub prompt_variant: PromptVariant,
    pub chunk_size: usize,
    pub overlap: usize,
    pub threshold: f64,
    pub noise_lexicon: Option<PathBuf>,
    pub overrides_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl PipelineConfig {
    pub fn new(config_id: ConfigId, settings: &Settings) -> Self {
        PipelineConfig {
            config_id,
            coref_enabled: config_id.coref_enabled(),
            prompt_variant: config_id.prompt_variant(),
            chunk_size: settings.chunk_size,
            overlap: settings.overlap,
            threshold: settings.threshold,
            noise_lexicon: settings.noise_lexicon.clone(),
            overrides_dir: settings.overrides_dir.clone(),
            out_dir: settings.run_dir().join(config_id.as_str()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let id = self.config_id;
        if self.coref_enabled != id.coref_enabled() || self.prompt_variant != id.prompt_variant() {
            return Err(Error::InvalidConfig(format!(
                "{id} requires coref_enabled={} and prompt_variant={}",
                id.coref_enabled(),
                id.prompt_variant()
            )));
        }
        if self.chunk_size == 0 || self.overlap >= self.chunk_size {
            return Err(Error::InvalidConfig("chunk size must exceed overlap".into()));
        }
        Ok(())
    }

    pub fn case_dir(&self, case_id: &str) -> PathBuf {
        self.out_dir.join(case_id)
    }

    pub fn overrides_path(&self, case_id: &str) -> Option<PathBuf> {
        self.overrides_dir
            .as_ref()
            .map(|d| d.join(format!("{case_id}.{}.overrides", self.config_id)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariant_table() {
        let s = Settings::default();
        let expect = [
            (ConfigId::Graphrag, false, PromptVariant::Baseline),
            (ConfigId::NoCoref, false, PromptVariant::Structured),
            (ConfigId::NoStructprompt, true, PromptVariant::Baseline),
            (ConfigId::Corekg, true, PromptVariant::Structured),
        ];
        for (id, coref, variant) in expect {
            let c = PipelineConfig::new(id, &s);
            assert_eq!((c.coref_enabled, c.prompt_variant), (coref, variant));
            c.validate().unwrap();
        }
        let mut bad = PipelineConfig::new(ConfigId::Graphrag, &s);
        bad.coref_enabled = true;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_id_names() {
        for c in ConfigId::ALL {
            assert_eq!(c.as_str().parse::<ConfigId>().unwrap(), c);
        }
        assert_eq!("no-coref".parse::<ConfigId>().unwrap(), ConfigId::NoCoref);
        assert!("full".parse::<ConfigId>().is_err());
    }

    #[test]
    fn ini_and_env() {
        let mut s = Settings::default();
        s.apply_ini(
            "; demo\n[chunking]\nsize = 120\noverlap = 20\n[gateway]\nbackend = echo\nmock_rules = rules.txt\ncache = record\n[metrics]\nthreshold = 80\n[run]\nconfigs = corekg, graphrag\n",
            Path::new("/cfg"),
        )
        .unwrap();
        assert_eq!((s.chunk_size, s.overlap), (120, 20));
        assert_eq!(s.backend.backend, "echo");
        assert_eq!(s.backend.mock_rules.as_deref(), Some(Path::new("/cfg/rules.txt")));
        assert_eq!(s.cache_mode, CacheMode::Record);
        assert_eq!(s.configs, [ConfigId::Corekg, ConfigId::Graphrag]);
        s.apply_env_from(&[
            ("CASEGRAPH_CHUNKING_SIZE".into(), "200".into()),
            ("CASEGRAPH_EXTRACTION_TYPE_MODE".into(), "lenient:ORGANIZATION".into()),
            ("UNRELATED".into(), "x".into()),
        ])
        .unwrap();
        assert_eq!(s.chunk_size, 200);
        assert_eq!(s.extraction.type_mode, TypeMode::Lenient(EntityType::Organization));
        s.validate().unwrap();
    }

    #[test]
    fn bad_settings() {
        let mut s = Settings::default();
        assert!(s.apply_ini("[chunking]\nsizee = 3\n", Path::new("")).is_err());
        assert!(s.apply_ini("[metrics]\nthreshold = high\n", Path::new("")).is_err());
        s.overlap = 300;
        assert!(s.validate().is_err());
    }
}
