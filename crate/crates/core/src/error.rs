//! Error type shared across the library.

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A documented precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Mismatched dimensions between two operands.
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    /// A factorization was asked for more directions than the data supports.
    #[error("requested {requested} directions but numerical rank is {rank}")]
    RankDeficient { requested: usize, rank: usize },

    /// sigma = 0 with a positive sampling rate has unbounded privacy loss.
    #[error("infinite privacy loss: sigma = 0 with sampling rate q = {q}")]
    InfinitePrivacyLoss { q: f64 },

    /// No sigma in the search bracket can meet the requested budget.
    #[error(
        "calibration infeasible: target epsilon {target} is below the achievable floor {floor}"
    )]
    CalibrationInfeasible { target: f64, floor: f64 },

    /// A forward pass produced a non-finite value for the named sample.
    #[error("non-finite forward pass for sample {sample_index}")]
    NonFiniteForward { sample_index: usize },

    /// Synthetic geometry could not be satisfied.
    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),

    /// Configuration rejected before any work started.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Malformed dataset container or results file.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
