//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("circle {index} (radius {radius}) could not be placed after {attempts} attempts; {placed} circles placed so far")]
    PackingFailure {
        index: usize,
        radius: f64,
        attempts: usize,
        placed: usize,
    },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("solution became non-finite at t = {t}")]
    Instability { t: f64 },

    #[error("seed sampling stalled: {accepted} of {attempts} draws accepted (rate below 1e-4)")]
    SamplingFailure { accepted: usize, attempts: usize },

    #[error("no extracellular start position found for walker {walker} within {attempts} attempts")]
    WalkerStartFailure { walker: usize, attempts: usize },

    #[error("degenerate field: {reason}")]
    DegenerateField { reason: String },

    #[error("degenerate Gaussian fit: {reason}")]
    DegenerateFit { reason: String },

    #[error("seed {index} failed: {source}")]
    SeedFailure {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
