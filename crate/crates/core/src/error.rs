use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension must be at least 1")]
    InvalidDimension,

    #[error("expected a vector of length {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("sample has a non-finite entry at coordinate {coordinate}")]
    InvalidSample { coordinate: usize },

    #[error("need at least {required} samples, have {actual}")]
    InsufficientSamples { required: u64, actual: u64 },

    #[error("sample count must be at least 2, got {0}")]
    InvalidCount(u64),

    #[error("squared radius must be positive and finite")]
    InvalidRadius,

    #[error("k² must be positive (and below N when converting to λ²)")]
    InvalidK,

    #[error("probability must lie strictly between 0 and 1")]
    InvalidProbability,

    #[error("covariance is singular: pivot {pivot:e} at row {row}")]
    SingularCovariance { row: usize, pivot: f64 },

    #[error("not a valid covariance matrix: {0}")]
    InvalidCovariance(&'static str),

    #[error(
        "false-alarm target {epsilon} is unreachable with {count} samples; \
         the smallest achievable bound is {achievable}"
    )]
    InfeasibleEpsilon { epsilon: f64, count: u64, achievable: f64 },

    #[error("covariance is singular at the end of a {warmup}-sample warmup")]
    SingularAtWarmup { warmup: u64 },

    #[error("required sample size exceeds {limit}")]
    SampleSizeTooLarge { limit: u64 },

    #[error("invalid detector configuration: {0}")]
    InvalidConfig(&'static str),
}
