//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A Cholesky pivot was non-positive even after the one-shot diagonal
    /// jitter retry. Usually signals a degenerate combiner (repeated beams).
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    /// Normal equations became singular (numerical rank < columns), e.g.
    /// duplicate support indices selected in a matching-pursuit loop.
    #[error("matrix is numerically rank deficient")]
    RankDeficient,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// A bisection / bracketing search did not find a sign change.
    #[error("search failed: {0}")]
    SearchFailed(String),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("zero vector where a nonzero vector is required")]
    ZeroVector,

    #[error("zero regressor in least-squares gain fit")]
    ZeroRegressor,

    #[error("truth channel has zero norm")]
    ZeroTruth,

    /// Desk-scale guard for the joint-dictionary OMP baseline.
    #[error("problem size exceeds the column-evaluation guard: {0}")]
    ScaleRefused(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
