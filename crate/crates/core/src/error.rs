use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Store metadata is missing or malformed.
    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    /// Metadata and chunk bytes disagree.
    #[error("integrity error in {path}: {msg}")]
    Integrity { path: PathBuf, msg: String },

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Invalid user-supplied configuration or arguments.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called outside its domain.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("non-finite gradient in parameter `{param}` at step {step}")]
    NanGradient { param: String, step: usize },

    #[error("training diverged at epoch {epoch}: loss {loss} exceeds {limit}")]
    Diverged { epoch: usize, loss: f64, limit: f64 },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn integrity(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Integrity {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// True for errors caused by bad input rather than a failing run.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Precondition(_) | Error::Format { .. }
        )
    }
}
