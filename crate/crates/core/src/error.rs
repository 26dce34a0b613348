use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid discrete Weibull parameters: q={q}, beta={beta} (need 0 < q < 1, beta > 0)")]
    ParameterDomain { q: f64, beta: f64 },

    #[error("probability {0} outside the open interval (0, 1)")]
    ProbabilityDomain(f64),

    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    #[error("need at least {needed} distinct values to place {knots} knots, found {found}")]
    TooFewDistinct {
        knots: usize,
        needed: usize,
        found: usize,
    },

    #[error("invalid covariate spec: {0}")]
    InvalidSpec(String),

    #[error("column `{0}` not found")]
    MissingColumn(String),

    #[error("data error at row {row}, column `{column}`: {message}")]
    Data {
        row: usize,
        column: String,
        message: String,
    },

    #[error("non-finite linear predictor at row {row}")]
    Overflow { row: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("covariance matrix unavailable (singular or non-finite Hessian)")]
    CovarianceUnavailable,

    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },

    #[error("unsupported model file version {0}")]
    UnsupportedVersion(String),

    #[error("all replicates failed: {0}")]
    AllReplicatesFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
