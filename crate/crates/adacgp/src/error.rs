//! Error type shared across the crate.

use thiserror::Error;

/// Errors raised by generators, estimators and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violates a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Matrix or vector shapes do not conform.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Graph generation kept producing unusable draws.
    #[error("degenerate graph after {attempts} attempts: {reason}")]
    DegenerateGraph { attempts: u32, reason: String },

    /// State became non-finite or exceeded the blow-up guard.
    #[error("numerical divergence at step {step} in {context}")]
    Divergence { step: usize, context: String },

    /// A metric is undefined for the given input (e.g. zero reference).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Malformed input file.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
