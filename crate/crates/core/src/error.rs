use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the labeling pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("non-finite coordinate at point index {index}")]
    NonFinitePoint { index: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("cluster has {got} points, need at least {need}")]
    TooFewPoints { got: usize, need: usize },

    #[error("frustum contains no points")]
    EmptyFrustum,

    #[error("cannot build a distribution from an empty label set")]
    EmptyDistribution,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parse error in {path} at byte {offset}: {message}")]
    Parse {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}

impl Error {
    /// Stable machine-readable tag for this error's variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::NonFinitePoint { .. } => "non_finite_point",
            Error::Config(_) => "config",
            Error::Precondition(_) => "precondition",
            Error::Degenerate(_) => "degenerate",
            Error::TooFewPoints { .. } => "too_few_points",
            Error::EmptyFrustum => "empty_frustum",
            Error::EmptyDistribution => "empty_distribution",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
        }
    }
}
