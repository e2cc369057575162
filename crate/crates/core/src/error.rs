use thiserror::Error;

use crate::martingale::DifferenceSequence;

/// Errors produced by the toolkit.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid exponent {value}: {reason}")]
    InvalidExponent { value: f64, reason: &'static str },

    #[error("invalid constant {0}: must be finite and positive")]
    InvalidConstant(f64),

    #[error("invalid norm: {0}")]
    InvalidNorm(String),

    #[error("no dual norm is available for {0}")]
    MissingDual(String),

    #[error("depth {requested} out of range (limit {limit})")]
    DepthOutOfRange { requested: usize, limit: usize },

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("martingale property violated at level {level}, block {index}: parent differs from child mean by {deviation:e}")]
    MartingaleViolation {
        level: usize,
        index: usize,
        deviation: f64,
    },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("difference sequence carries an initial term where none is allowed")]
    UnexpectedInitial,

    #[error("difference sequence has no initial term")]
    MissingInitial,

    #[error("instance too large for exhaustive enumeration: {0}")]
    InstanceTooLarge(String),

    #[error(
        "certificate constant {c} is violated: objective {objective:e} crosses bound {bound:e}"
    )]
    CertificateViolation {
        c: f64,
        objective: f64,
        bound: f64,
        witness: Box<DifferenceSequence>,
    },

    #[error("functional is not positively homogeneous: f({scale} x) = {scaled:e} but {scale} f(x) = {expected:e}")]
    HomogeneityViolation {
        scale: f64,
        scaled: f64,
        expected: f64,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("bound violated: {0}")]
    BoundViolated(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

pub(crate) fn check_constant(c: f64) -> Result<()> {
    if c.is_finite() && c > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConstant(c))
    }
}
