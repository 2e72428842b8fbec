//! Error type shared by the whole crate.

use crate::pipeline::SolveReport;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("dense operation of dimension {n} exceeds the desk-scale cap {cap}")]
    DenseCapExceeded { n: usize, cap: usize },

    #[error("matrix market error at line {line}: {msg}")]
    MatrixMarket { line: usize, msg: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// The Hankel solve could not reach the residual target in any mode.
    /// Carries the best iterate found so the caller can still use it.
    #[error(
        "ill-conditioned system: best relative residual {achieved:.3e} above target {target:.3e} after {iters} iterations"
    )]
    IllConditioned {
        best: Vec<f64>,
        achieved: f64,
        target: f64,
        iters: usize,
    },

    /// All sketch retries were exhausted without meeting the residual target.
    /// Carries the best report so diagnostics can still be written.
    #[error(
        "solver failure: best relative residual {:.3e} after {} retries",
        .report.relative_residual,
        .report.retries_used
    )]
    SolverFailure { report: Box<SolveReport> },

    #[error("experiment precondition failed: {0}")]
    PreconditionFailed(String),
}

impl Error {
    pub fn dim(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
