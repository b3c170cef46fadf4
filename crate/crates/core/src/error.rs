//! Error type shared by every pipeline stage.

use std::path::PathBuf;

use crate::vocab::Category;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An operation received an empty input it cannot work with.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A placeholder category has no vocabulary entries to substitute.
    #[error("no vocabulary entries for category {0}")]
    MissingVocabulary(Category),

    #[error("unknown prompt id `{0}`")]
    UnknownPrompt(String),

    /// A test-partition sample reached a training-only surface.
    #[error("test-partition sample `{0}` must not enter training data")]
    Leakage(String),

    #[error("duplicate report for model `{model}`, prompt `{prompt}`")]
    DuplicateReport { model: String, prompt: String },

    /// An upstream stage output is missing; `command` names the fix.
    #[error("missing artifact {path}: run `{command}` first")]
    MissingArtifact { path: PathBuf, command: String },

    #[error("endpoint `{endpoint}`: API key env var `{var}` is not set")]
    Auth { endpoint: String, var: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("inference run failed: {0}")]
    Inference(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Stable category name, used by the CLI to pick an exit code.
    pub fn category(&self) -> &'static str {
        match self {
            Error::EmptyInput(_) | Error::InvalidParameter(_) => "input",
            Error::MissingVocabulary(_) => "vocabulary",
            Error::UnknownPrompt(_) => "prompt",
            Error::Leakage(_) => "leakage",
            Error::DuplicateReport { .. } => "report",
            Error::MissingArtifact { .. } => "missing-artifact",
            Error::Auth { .. } => "auth",
            Error::Io { .. } | Error::Format { .. } => "io",
            Error::Config(_) => "config",
            Error::Inference(_) => "inference",
        }
    }
}
