use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the valuation pipeline.
#[derive(Debug, Error)]
pub enum StorageError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("grid construction stuck at level {level} (chain `{chain}`): rate makes no progress")]
    StuckChain { chain: &'static str, level: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("numeric failure at stage {stage}, index {index}: {message}")]
    Numeric {
        stage: usize,
        index: usize,
        message: String,
    },

    #[error("no regression fit for stage {stage}, regime {regime}")]
    UncoveredBucket { stage: usize, regime: usize },

    #[error("instance too large for brute force: {size} cells exceeds limit {limit}")]
    InstanceTooLarge { size: usize, limit: usize },

    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl StorageError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        StorageError::InvalidArgument(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        StorageError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            StorageError::Config { .. } => 2,
            StorageError::Numeric { .. } | StorageError::UncoveredBucket { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, StorageError>;
