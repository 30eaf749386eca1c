//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by image I/O, validation, and the solvers.
#[derive(Debug, Error)]
pub enum DeconvError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed PGM/PPM header or payload.
    #[error("image format error: {0}")]
    Format(String),

    /// Shape incompatibility between operands.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A type invariant would be violated (non-finite entries,
    /// kernel not normalized, negative entries, ...).
    #[error("invalid value: {0}")]
    Invalid(String),

    /// Bad solver or network configuration.
    #[error("invalid config: {0}")]
    Config(String),

    /// A solver produced a non-finite objective and could not recover.
    #[error("non-finite objective at iteration {iter}")]
    NonFinite { iter: usize },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, DeconvError>;
