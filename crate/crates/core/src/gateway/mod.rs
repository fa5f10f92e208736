//! Uniform completion interface over interchangeable backends.
//!
//! A [`Gateway`] wraps one [`CompletionBackend`] (HTTP, scripted mock, echo)
//! with retry and an optional on-disk record/replay store. Backends are looked
//! up by name in a [`BackendRegistry`].

mod http;
mod mock;
mod registry;
mod replay;

use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::entity::EntityType;

pub use http::{HttpBackend, HttpFlavor};
pub use mock::{
    mock_alias_resolver, AliasTable, EchoBackend, GazetteerEntry, MockRules, RuleMockBackend,
    ScriptedBackend,
};
pub use registry::{BackendFactory, BackendRegistry, BackendSettings};
pub use replay::ReplayStore;

pub const DEFAULT_MODEL: &str = "llama3.3:70b";

/// Which pipeline stage issued a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StageTag {
    Coref(EntityType),
    Extraction,
    BaselineExtraction,
}

impl fmt::Display for StageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StageTag::Coref(t) => write!(f, "coref:{}", t.slug()),
            StageTag::Extraction => f.write_str("extraction"),
            StageTag::BaselineExtraction => f.write_str("baseline-extraction"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_output: u32,
    pub model_name: String,
    pub stage_tag: StageTag,
    /// Content of the prompt's document slot. Not part of the digest (the
    /// prompt already contains it); mock backends operate on it directly.
    #[serde(default)]
    pub input_text: String,
    /// Marker a complete response must contain; its absence flags truncation.
    #[serde(default)]
    pub expected_terminator: Option<String>,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, stage_tag: StageTag) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            temperature: 0.0,
            max_output: 4096,
            model_name: DEFAULT_MODEL.to_string(),
            stage_tag,
            input_text: String::new(),
            expected_terminator: None,
        }
    }

    pub fn with_input(mut self, input: impl Into<String>) -> Self {
        self.input_text = input.into();
        self
    }

    pub fn with_terminator(mut self, t: impl Into<String>) -> Self {
        self.expected_terminator = Some(t.into());
        self
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model_name = model.into();
        self
    }

    /// Hex SHA-256 of (model, temperature, prompt).
    pub fn digest(&self) -> String {
        // -0.0 and 0.0 hash alike
        let temp = if self.temperature == 0.0 { 0.0 } else { self.temperature };
        let mut h = Sha256::new();
        h.update(b"casegraph-request-v1\n");
        h.update(self.model_name.as_bytes());
        h.update(b"\n");
        h.update(format!("{temp:?}").as_bytes());
        h.update(b"\n");
        h.update(self.prompt.as_bytes());
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Mock,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub backend: BackendKind,
    pub latency_ms: u64,
    pub request_digest: String,
    /// The expected terminator was missing from the response.
    pub truncated: bool,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend unavailable after {attempts} attempt(s): {last}")]
    Unavailable { attempts: u32, last: String },
    #[error("replay store has no response for request {digest}")]
    CacheMiss { digest: String },
    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("completion prompt is empty")]
    EmptyPrompt,
    #[error("no backend configured")]
    NoBackend,
    #[error("replay store error: {0}")]
    Store(String),
}

impl GatewayError {
    pub fn is_retryable(&self) -> bool {
        match self {
            GatewayError::Transport(_) => true,
            GatewayError::Status { status, .. } => *status >= 500 || *status == 408 || *status == 429,
            _ => false,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            GatewayError::Unavailable { .. } => "backend-unavailable",
            GatewayError::CacheMiss { .. } => "cache-miss",
            GatewayError::Status { .. } => "http-status",
            GatewayError::Transport(_) => "transport",
            GatewayError::Malformed(_) => "malformed-response",
            GatewayError::EmptyPrompt => "empty-prompt",
            GatewayError::NoBackend => "no-backend",
            GatewayError::Store(_) => "replay-store",
        }
    }
}

/// A completion strategy. Implementations must be safe to call concurrently.
pub trait CompletionBackend: Send + Sync {
    fn name(&self) -> &str;
    fn kind(&self) -> BackendKind;
    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_secs(1),
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(attempts: u32) -> Self {
        RetryPolicy {
            attempts,
            initial_backoff: Duration::ZERO,
            multiplier: 2.0,
        }
    }

    /// Delay after the given failed attempt (1-based).
    pub fn backoff(&self, attempt: u32) -> Duration {
        self.initial_backoff
            .mul_f64(self.multiplier.powi(attempt.saturating_sub(1) as i32))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CacheMode {
    /// Always call the backend.
    #[default]
    Off,
    /// Serve from the store when possible, otherwise call the backend and persist.
    Record,
    /// Serve only from the store; a miss is an error.
    StrictReplay,
}

pub struct Gateway {
    backend: Option<Arc<dyn CompletionBackend>>,
    store: Option<ReplayStore>,
    mode: CacheMode,
    retry: RetryPolicy,
}

impl Gateway {
    pub fn new(backend: Arc<dyn CompletionBackend>) -> Self {
        Gateway {
            backend: Some(backend),
            store: None,
            mode: CacheMode::Off,
            retry: RetryPolicy::default(),
        }
    }

    /// A gateway that can only answer from a replay store.
    pub fn replay_only(store: ReplayStore) -> Self {
        Gateway {
            backend: None,
            store: Some(store),
            mode: CacheMode::StrictReplay,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_store(mut self, store: ReplayStore, mode: CacheMode) -> Self {
        self.store = Some(store);
        self.mode = mode;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    pub fn backend_name(&self) -> &str {
        self.backend.as_ref().map_or("replay", |b| b.name())
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        if req.prompt.trim().is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        let started = Instant::now();
        let digest = req.digest();
        let finish = |text: String, backend: BackendKind| {
            let truncated = req
                .expected_terminator
                .as_deref()
                .is_some_and(|t| !text.contains(t));
            if truncated {
                log::warn!("response for {} ({}) lacks its terminator", digest, req.stage_tag);
            }
            CompletionResponse {
                text,
                backend,
                latency_ms: started.elapsed().as_millis() as u64,
                request_digest: digest.clone(),
                truncated,
            }
        };

        if self.mode != CacheMode::Off {
            if let Some(store) = &self.store {
                if let Some(text) = store.get(&digest)? {
                    return Ok(finish(text, BackendKind::Replay));
                }
            }
            if self.mode == CacheMode::StrictReplay {
                return Err(GatewayError::CacheMiss { digest });
            }
        }

        let backend = self.backend.as_ref().ok_or(GatewayError::NoBackend)?;
        let text = self.call_with_retry(backend.as_ref(), req)?;
        if self.mode == CacheMode::Record {
            if let Some(store) = &self.store {
                store.put(&digest, &text, req)?;
            }
        }
        Ok(finish(text, backend.kind()))
    }

    fn call_with_retry(
        &self,
        backend: &dyn CompletionBackend,
        req: &CompletionRequest,
    ) -> Result<String, GatewayError> {
        let attempts = self.retry.attempts.max(1);
        let mut last = None;
        for attempt in 1..=attempts {
            match backend.complete(req) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() => {
                    log::warn!("{} attempt {attempt}/{attempts} failed: {e}", backend.name());
                    last = Some(e);
                    if attempt < attempts {
                        std::thread::sleep(self.retry.backoff(attempt));
                    }
                }
                Err(e) => return Err(e),
            }
        }
        Err(GatewayError::Unavailable {
            attempts,
            last: last.map(|e| e.to_string()).unwrap_or_default(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Flaky {
        failures: u32,
        calls: AtomicU32,
        status: u16,
    }

    impl CompletionBackend for Flaky {
        fn name(&self) -> &str {
            "flaky"
        }
        fn kind(&self) -> BackendKind {
            BackendKind::Http
        }
        fn complete(&self, _req: &CompletionRequest) -> Result<String, GatewayError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(GatewayError::Status {
                    status: self.status,
                    body: "down".into(),
                })
            } else {
                Ok("ok".into())
            }
        }
    }

    fn req(p: &str) -> CompletionRequest {
        CompletionRequest::new(p, StageTag::Extraction)
    }

    #[test]
    fn digest_is_stable_and_ignores_non_key_fields() {
        let a = req("hello");
        let mut b = a.clone();
        b.max_output = 7;
        b.input_text = "x".into();
        b.stage_tag = StageTag::BaselineExtraction;
        assert_eq!(a.digest(), b.digest());
        let json = serde_json::to_string(&a).unwrap();
        let back: CompletionRequest = serde_json::from_str(&json).unwrap();
        assert_eq!(back.digest(), a.digest());
        let mut c = a.clone();
        c.temperature = -0.0;
        assert_eq!(c.digest(), a.digest());
        c.temperature = 0.7;
        assert_ne!(c.digest(), a.digest());
        assert_ne!(req("hello!").digest(), a.digest());
        assert_ne!(a.clone().with_model("other").digest(), a.digest());
    }

    #[test]
    fn retries_transient_failures() {
        let b = Arc::new(Flaky {
            failures: 2,
            calls: AtomicU32::new(0),
            status: 503,
        });
        let g = Gateway::new(b.clone()).with_retry(RetryPolicy::no_delay(3));
        assert_eq!(g.complete(&req("p")).unwrap().text, "ok");
        assert_eq!(b.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn gives_up_after_attempts() {
        let b = Arc::new(Flaky {
            failures: 10,
            calls: AtomicU32::new(0),
            status: 500,
        });
        let g = Gateway::new(b.clone()).with_retry(RetryPolicy::no_delay(3));
        let err = g.complete(&req("p")).unwrap_err();
        assert!(matches!(err, GatewayError::Unavailable { attempts: 3, .. }));
        assert_eq!(b.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let b = Arc::new(Flaky {
            failures: 10,
            calls: AtomicU32::new(0),
            status: 400,
        });
        let g = Gateway::new(b.clone()).with_retry(RetryPolicy::no_delay(3));
        assert!(matches!(g.complete(&req("p")), Err(GatewayError::Status { status: 400, .. })));
        assert_eq!(b.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn backoff_is_exponential() {
        let p = RetryPolicy::default();
        assert_eq!(p.backoff(1), Duration::from_secs(1));
        assert_eq!(p.backoff(2), Duration::from_secs(2));
        assert_eq!(p.backoff(3), Duration::from_secs(4));
    }

    #[test]
    fn empty_prompt_rejected() {
        let g = Gateway::new(Arc::new(EchoBackend));
        assert!(matches!(g.complete(&req("  ")), Err(GatewayError::EmptyPrompt)));
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReplayStore::open(dir.path()).unwrap();
        let mut fixtures = std::collections::HashMap::new();
        let r = req("resolve this");
        fixtures.insert(r.digest(), "RESOLVED TEXT".to_string());
        let g = Gateway::new(Arc::new(ScriptedBackend::new(fixtures)))
            .with_store(store, CacheMode::Record);
        let first = g.complete(&r).unwrap();
        assert_eq!(first.text, "RESOLVED TEXT");
        assert_eq!(first.backend, BackendKind::Mock);
        let second = g.complete(&r).unwrap();
        assert_eq!(second.text, first.text);
        assert_eq!(second.backend, BackendKind::Replay);
        assert_eq!(second.request_digest, first.request_digest);

        let strict = Gateway::replay_only(ReplayStore::open(dir.path()).unwrap());
        assert_eq!(strict.complete(&r).unwrap().text, "RESOLVED TEXT");
        let miss = strict.complete(&req("never seen")).unwrap_err();
        assert!(matches!(miss, GatewayError::CacheMiss { .. }));
    }

    #[test]
    fn truncation_flag() {
        let g = Gateway::new(Arc::new(EchoBackend));
        let r = req("p").with_input("body").with_terminator("<END>");
        assert!(g.complete(&r).unwrap().truncated);
    }
}
