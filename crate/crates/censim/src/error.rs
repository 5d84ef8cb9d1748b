//! Error type shared across the crate.

use thiserror::Error;

/// Errors raised by estimation, smoothing, and data ingestion.
#[derive(Debug, Error)]
pub enum Error {
    /// A fit or estimator was asked to run on zero observations.
    #[error("empty sample")]
    EmptySample,

    /// The censoring distribution saturates (1 - G(t-) = 0) at an uncensored
    /// observation, so the inverse-probability weight is undefined.
    #[error("weight singularity: 1 - G(t-) = 0 at uncensored time {time}")]
    WeightSingularity { time: f64 },

    /// The index values have zero spread, so no bandwidth can be formed.
    #[error("degenerate index: zero spread in index values")]
    DegenerateIndex,

    /// A kernel-smoothed value was requested where the local kernel mass is
    /// below the validity floor.
    #[error("empty neighborhood: kernel denominator below floor at u = {at}")]
    EmptyNeighborhood { at: f64 },

    /// Every observation was removed by trimming, leaving nothing to sum.
    #[error("empty criterion: all observations trimmed")]
    EmptyCriterion,

    /// The plug-in information matrix is numerically singular.
    #[error("singular information matrix")]
    SingularInformation,

    /// A precondition on caller-supplied values failed.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A dataset file failed validation; `line` is 1-based and counts the
    /// header.
    #[error("line {line}: {message}")]
    Dataset { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
