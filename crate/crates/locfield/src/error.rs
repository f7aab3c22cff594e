//! Crate-wide error type.
//!
//! Numerical routines in this crate fail in a small number of well-defined
//! ways (domain violations, degenerate geometry, loss of positive
//! definiteness). Each gets its own variant so callers can match on the
//! failure class instead of parsing strings.

use thiserror::Error;

/// Errors produced by estimation, simulation and I/O routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A dataset with zero observations was passed where data is required.
    #[error("empty dataset")]
    EmptyDataset,

    /// Two observation locations coincide exactly; covariance matrices over
    /// such a set are singular, so this is rejected at construction.
    #[error("duplicate locations at indices {0} and {1}")]
    DuplicateLocations(usize, usize),

    /// Coordinate dimension of an input disagrees with the dataset.
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// A weight vector that is identically zero (or has zero sum) cannot be
    /// telescoped or used in a weighted fit.
    #[error("degenerate weights: {0}")]
    DegenerateWeights(&'static str),

    /// All candidate observations received zero weight, so there is nothing
    /// to fit against.
    #[error("empty effective neighborhood")]
    EmptyNeighborhood,

    /// The moment system for constrained weights is singular (e.g. all
    /// offsets collinear in a way that defeats the linear constraint).
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// Appending a point to an incremental Cholesky factor produced a
    /// conditional variance at or below the numerical floor.
    #[error("numerically singular append at step {index} (conditional variance {cond_var:e})")]
    SingularAppend { index: usize, cond_var: f64 },

    /// A matrix that must be positive definite failed its factorization.
    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// Argument outside the supported domain of a special function or model.
    #[error("{what} = {value} outside supported range [{lo}, {ho}]", ho = hi)]
    OutOfDomain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// An iterative routine exhausted its iteration budget.
    #[error("no convergence in {0}")]
    NoConvergence(&'static str),

    /// Too many calibration replicates failed to produce a statistic.
    #[error("calibration failed: {0}")]
    Calibration(String),

    /// A non-finite value surfaced where a finite one is required.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Configuration file is malformed or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed CSV input.
    #[error("csv parse error at line {line}: {msg}")]
    Csv { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
