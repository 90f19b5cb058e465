use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the gait pipeline.
#[derive(Debug, Error)]
pub enum GaitError {
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("numeric fault: {0}")]
    Numeric(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("data error: {0}")]
    Data(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, GaitError>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(GaitError::Shape(msg.into()))
}

impl GaitError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GaitError::Io {
            path: path.into(),
            source,
        }
    }
}
