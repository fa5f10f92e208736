use std::path::PathBuf;

use thiserror::Error;

use crate::gateway::GatewayError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("corpus directory {0} contains no case documents")]
    CorpusEmpty(PathBuf),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid template: {0}")]
    TemplateInvalid(String),

    #[error(transparent)]
    Gateway(#[from] GatewayError),

    #[error("coreference pass {entity_type} failed: {reason}")]
    PassFailure { entity_type: String, reason: String },

    #[error("graph has no nodes")]
    EmptyGraph,

    #[error("override file references unknown node ids: {}", .0.join(", "))]
    UnknownOverrideIds(Vec<String>),

    #[error("invalid override directive at line {line}: {message}")]
    OverrideSyntax { line: usize, message: String },

    #[error("relative degradation needs a positive base, got {0}")]
    InvalidBase(f64),

    #[error("graphml parse error: {0}")]
    GraphmlParse(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("no {kind} registered under the name {name:?}")]
    UnknownStrategy { kind: &'static str, name: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used by the CLI error summary.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::CorpusEmpty(_) => "corpus-empty",
            Error::Io { .. } => "io",
            Error::InvalidConfig(_) => "invalid-config",
            Error::TemplateInvalid(_) => "template-invalid",
            Error::Gateway(g) => g.kind(),
            Error::PassFailure { .. } => "pass-failure",
            Error::EmptyGraph => "empty-graph",
            Error::UnknownOverrideIds(_) | Error::OverrideSyntax { .. } => "override-error",
            Error::InvalidBase(_) => "invalid-base",
            Error::GraphmlParse(_) => "graphml-parse",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::UnknownStrategy { .. } => "unknown-strategy",
        }
    }
}

pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|e| Error::io(path, e))
    }
}
