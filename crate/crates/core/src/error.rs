use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = BartError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum BartError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("ingestion error at line {line}, column '{column}': {message}")]
    Ingest {
        line: u64,
        column: String,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("routing error: row has {got} columns, tree expects {expected}")]
    Routing { expected: usize, got: usize },

    #[error("invalid tree edit: {0}")]
    InvalidEdit(String),

    #[error("invalid hyperparameter: {0}")]
    Hyperparams(String),

    #[error("invalid missingness mechanism: {0}")]
    Mechanism(String),

    #[error("internal sampler error: {0}")]
    Sampler(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl BartError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BartError::Io {
            path: path.into(),
            source,
        }
    }
}
