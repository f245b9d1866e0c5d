//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by constructors, integral operators, estimators and solvers.
///
/// Diagnostics are carried as `f64`/`usize` regardless of the scalar type the
/// computation ran in.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),

    #[error("grid is not strictly increasing from 0 at point {index}")]
    NonMonotoneGrid { index: usize },

    #[error("operands are defined on different time grids")]
    GridMismatch,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("stability index must lie in (0, 2), got {0}")]
    InvalidStabilityIndex(f64),

    #[error("covariance matrix is not symmetric positive semidefinite: {0}")]
    NotPositiveSemidefinite(String),

    #[error("operator piece {index} has operator norm {norm} > 1")]
    OperatorNormExceedsOne { index: usize, norm: f64 },

    #[error("epsilon must be strictly positive, got {0}")]
    NonPositiveEpsilon(f64),

    #[error("scheme did not terminate within {max_stages} stages (last residual {last_residual})")]
    NoTermination { max_stages: usize, last_residual: f64 },

    #[error("iteration did not converge within {iterations} steps (last residual {last_residual})")]
    NoConvergence {
        iterations: usize,
        last_residual: f64,
        residual_history: Vec<f64>,
    },

    #[error("path value at index {index} is not strictly positive ({value})")]
    NonPositivePath { index: usize, value: f64 },

    #[error("estimator needs at least {needed} paths, got {got}")]
    TooFewPaths { needed: usize, got: usize },

    #[error("enumeration oracle requires a scalar problem with at most {max} intervals, got d={dim}, n={intervals}")]
    EnumerationTooLarge {
        dim: usize,
        intervals: usize,
        max: usize,
    },

    #[error(
        "feedback bound violated at sequence index {n}, grid index {time_index}, seed {seed}: \
         {kind} norm {norm} exceeds allowed {allowed}"
    )]
    FeedbackBoundViolated {
        n: usize,
        time_index: usize,
        seed: u64,
        kind: &'static str,
        norm: f64,
        allowed: f64,
    },
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
