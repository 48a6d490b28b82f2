use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the uplift toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: column `{column}` must be 0 or 1, found `{value}`")]
    NonBinary {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: column `{column}` is not a finite number: `{value}`")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("schema mismatch: expected {expected} features, found {actual}")]
    WidthMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("propensity estimation failed: {0}")]
    Propensity(String),

    #[error("row index {index} out of bounds for {len} propensity scores")]
    IndexOutOfBounds { index: usize, len: usize },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable, machine-readable category for the error.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv(_)
            | Error::MissingColumn(_)
            | Error::NonBinary { .. }
            | Error::NonNumeric { .. }
            | Error::Empty(_) => "data",
            Error::Schema(_) | Error::WidthMismatch { .. } => "schema",
            Error::InvalidParameter(_) => "parameter",
            Error::Propensity(_) | Error::IndexOutOfBounds { .. } => "propensity",
            Error::Calibration(_) => "calibration",
            Error::UndefinedMetric(_) => "metric",
            Error::ModelFormat(_) | Error::Json(_) => "model",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
