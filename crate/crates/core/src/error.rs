use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("header error: {0}")]
    Header(String),

    #[error("stream {stream}: {source}")]
    Stream {
        stream: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite sample {0}")]
    NonFinite(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("out-of-order step: expected {expected}, got {got}")]
    OutOfOrder { expected: u64, got: u64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("undefined probability: {0}")]
    Undefined(String),

    #[error("inconsistent forest state: {0}")]
    Inconsistent(String),

    #[error("syntax error at {pos}: {message}")]
    Syntax { pos: usize, message: String },

    #[error("unknown event name `{0}`")]
    UnknownEvent(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{stage} failed at step {step}: {source}")]
    Stage {
        stage: &'static str,
        step: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn stage(stage: &'static str, step: u64, source: Error) -> Self {
        Error::Stage {
            stage,
            step,
            source: Box::new(source),
        }
    }
}
