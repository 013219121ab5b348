use thiserror::Error;

/// Crate-wide error type.
///
/// Numerical routines report structured failures rather than panicking so the
/// experiment harness can record a failed trial and keep going.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric (max |a_ij - a_ji| = {max_abs:e})")]
    NotSymmetric { max_abs: f64 },

    #[error("matrix is not positive definite (last jitter tried: {jitter_last:e})")]
    NotPositiveDefinite { jitter_last: f64 },

    #[error("iteration budget exhausted: {0}")]
    ConvergenceFailure(String),

    #[error("need at least {needed} samples, got {n}")]
    InsufficientSamples { n: usize, needed: usize },

    #[error("need at least {needed} rows, got {n}")]
    InsufficientRows { n: usize, needed: usize },

    #[error("design is rank deficient; implicated columns: {columns:?}")]
    RankDeficient { columns: Vec<usize> },

    #[error("non-finite loss encountered ({0})")]
    NonFiniteLoss(String),

    #[error("predictive gradient is degenerate (norm below 1e-12)")]
    DegenerateGradient,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("truth set is empty")]
    EmptyTruth,

    #[error("need at least 2 selections for stability, got {n}")]
    TooFewTrials { n: usize },

    #[error("column {column:?} has entries outside {{0, 1}}")]
    NotBinary { column: String },

    #[error("log transform requires positive responses; row {index} has {value}")]
    NonPositiveForLog { index: usize, value: f64 },

    #[error("dataset has no rows or no columns")]
    EmptyDataset,

    #[error("realized signal has (near-)zero variance; cannot calibrate noise")]
    ZeroSignalVariance,

    #[error("non-finite values in {0}")]
    NonFiniteData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
