use thiserror::Error;

use crate::catalog::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input text does not match the documented schema.
    #[error("parse error at `{field}`: {message}")]
    Parse { field: String, message: String },

    /// A type invariant does not hold.
    #[error("validation error: {rule}: {detail}")]
    Validation { rule: String, detail: String },

    #[error("unknown model id `{0}`")]
    UnknownModel(String),

    #[error("invalid pipeline: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidPipeline(Vec<Violation>),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("noise calibration failed: {0}")]
    Calibration(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("simulation error: {0}")]
    Simulation(String),

    #[error("trace format error: {0}")]
    Trace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(rule: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Validation {
            rule: rule.into(),
            detail: detail.into(),
        }
    }

    /// Short machine-readable category, used by the CLI error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Validation { .. } => "validation",
            Error::UnknownModel(_) => "unknown_model",
            Error::InvalidPipeline(_) => "invalid_pipeline",
            Error::Precondition(_) => "precondition",
            Error::Calibration(_) => "calibration",
            Error::Config(_) => "config",
            Error::Simulation(_) => "simulation",
            Error::Trace(_) => "trace",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }
}
