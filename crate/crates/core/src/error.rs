use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("{0}")]
    InvalidPenalty(String),

    #[error("penalty derivative is undefined at the origin")]
    DerivativeAtOrigin,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "matrix is not positive definite after jitter {jitter:e} (smallest eigenvalue {min_eigenvalue:e})"
    )]
    NotPositiveDefinite { min_eigenvalue: f64, jitter: f64 },

    #[error("Newton system is singular")]
    SingularNewton,

    #[error("coordinate descent requires positive diagonal, found {value} at index {index}")]
    NonPositiveDiagonal { index: usize, value: f64 },

    #[error("cannot select from an empty list of scores")]
    EmptySelection,

    #[error("fit failed at lambda = {lambda}: {source}")]
    PathFit {
        lambda: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("cross-validation fold {fold} failed: {source}")]
    FoldFit {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{failed} of {total} replications failed (limit is 10%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
