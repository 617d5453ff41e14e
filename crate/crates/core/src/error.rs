use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("unknown dataset id `{0}`")]
    UnknownDataset(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("ratio undefined: best correlation is zero")]
    UndefinedRatio,

    #[error("training diverged at step {step}: {msg}")]
    NonFinite { step: u64, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav error in {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation(_)
                | Error::Argument(_)
                | Error::Shape(_)
                | Error::UnsupportedFormat(_)
                | Error::Format(_)
                | Error::UnknownDataset(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
