use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use super::{
    CompletionBackend, EchoBackend, HttpBackend, HttpFlavor, MockRules, RuleMockBackend,
    ScriptedBackend, DEFAULT_MODEL,
};
use crate::error::{Error, Result};

pub const ENV_BASE_URL: &str = "CASEGRAPH_BASE_URL";
pub const ENV_MODEL: &str = "CASEGRAPH_MODEL";
pub const ENV_API_KEY: &str = "CASEGRAPH_API_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct BackendSettings {
    pub backend: String,
    pub base_url: String,
    /// Overrides the flavor's default endpoint path.
    pub path: Option<String>,
    pub model: String,
    pub auth_header: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_output: u32,
    pub mock_rules: Option<PathBuf>,
    pub fixtures_dir: Option<PathBuf>,
}

impl Default for BackendSettings {
    fn default() -> Self {
        BackendSettings {
            backend: "mock".to_string(),
            base_url: "http://localhost:11434".to_string(),
            path: None,
            model: DEFAULT_MODEL.to_string(),
            auth_header: "Authorization".to_string(),
            api_key: None,
            timeout: Duration::from_secs(600),
            max_output: 4096,
            mock_rules: None,
            fixtures_dir: None,
        }
    }
}

impl BackendSettings {
    /// Applies `CASEGRAPH_BASE_URL`, `CASEGRAPH_MODEL` and `CASEGRAPH_API_KEY`.
    pub fn apply_env(&mut self) {
        self.apply_env_from(|k| std::env::var(k).ok());
    }

    pub fn apply_env_from(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(v) = get(ENV_BASE_URL).filter(|v| !v.is_empty()) {
            self.base_url = v;
        }
        if let Some(v) = get(ENV_MODEL).filter(|v| !v.is_empty()) {
            self.model = v;
        }
        if let Some(v) = get(ENV_API_KEY).filter(|v| !v.is_empty()) {
            self.api_key = Some(v);
        }
    }
}

pub type BackendFactory =
    Box<dyn Fn(&BackendSettings) -> Result<Arc<dyn CompletionBackend>> + Send + Sync>;

/// Completion backends selectable by name.
pub struct BackendRegistry {
    factories: BTreeMap<String, BackendFactory>,
}

impl BackendRegistry {
    pub fn empty() -> Self {
        BackendRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register("ollama", |s| http(HttpFlavor::Ollama, s));
        r.register("http", |s| http(HttpFlavor::Ollama, s));
        r.register("openai", |s| http(HttpFlavor::OpenAi, s));
        r.register("echo", |_| Ok(Arc::new(EchoBackend)));
        r.register("scripted", |s| {
            let dir = s.fixtures_dir.as_ref().ok_or_else(|| {
                Error::InvalidConfig("scripted backend needs a fixtures directory".into())
            })?;
            Ok(Arc::new(ScriptedBackend::from_dir(dir)?))
        });
        r.register("mock", |s| {
            let rules = match &s.mock_rules {
                Some(p) => MockRules::load(p)?,
                None => MockRules::default(),
            };
            let mut mock = RuleMockBackend::new(rules);
            if let Some(dir) = &s.fixtures_dir {
                mock = mock.with_fixtures(ScriptedBackend::from_dir(dir)?);
            }
            Ok(Arc::new(mock))
        });
        r
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&BackendSettings) -> Result<Arc<dyn CompletionBackend>> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn build(&self, settings: &BackendSettings) -> Result<Arc<dyn CompletionBackend>> {
        let factory = self
            .factories
            .get(&settings.backend)
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "completion backend",
                name: settings.backend.clone(),
            })?;
        factory(settings)
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }
}

impl Default for BackendRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

fn http(flavor: HttpFlavor, s: &BackendSettings) -> Result<Arc<dyn CompletionBackend>> {
    let mut b = HttpBackend::new(flavor, &s.base_url, s.path.as_deref(), s.timeout)?;
    if let Some(key) = &s.api_key {
        let value = if s.auth_header.eq_ignore_ascii_case("authorization") {
            format!("Bearer {key}")
        } else {
            key.clone()
        };
        b = b.with_auth_header(&s.auth_header, &value);
    }
    Ok(Arc::new(b))
}
