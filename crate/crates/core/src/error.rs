use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum OpeError {
    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),

    #[error("data error at row {row}: {message}")]
    Data { row: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("estimator `{estimator}` requires a reward model but none was supplied")]
    MissingRewardModel { estimator: String },

    #[error("estimator `{estimator}` requires the full behavior action distribution")]
    MissingBehaviorDist { estimator: String },

    #[error("non-finite value at record {index}: {what}")]
    NonFinite { index: usize, what: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = OpeError> = std::result::Result<T, E>;
