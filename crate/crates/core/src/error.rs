use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient classes: need {needed} classes with at least {per_class} exemplars, found {available}")]
    InsufficientClasses {
        needed: usize,
        per_class: usize,
        available: usize,
    },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("dataset generation failed: {0}")]
    Generation(String),

    #[error("load error: {0}")]
    Load(String),

    #[error("invalid task partition: {0}")]
    InvalidPartition(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
