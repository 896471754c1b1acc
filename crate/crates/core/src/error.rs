use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("constraint violated: {0}")]
    ConstraintViolation(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("integration diverged: {0}")]
    IntegrationDiverged(String),

    /// Every measurement of a realization was discarded (no atom present).
    #[error("no valid measurements")]
    NoData,

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("alignment failed, missing realization ids: {missing:?}")]
    Alignment { missing: Vec<u64> },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    /// Short machine-readable tag, used by the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::ConstraintViolation(_) => "constraint_violation",
            Error::Range(_) => "range",
            Error::IntegrationDiverged(_) => "integration_diverged",
            Error::NoData => "no_data",
            Error::FitFailed(_) => "fit_failed",
            Error::Construction(_) => "construction",
            Error::Alignment { .. } => "alignment",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Format(_) => "format",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
