use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rate space: {0}")]
    InvalidRates(String),
    #[error("invalid statistics: {0}")]
    InvalidStatistics(String),
    #[error("estimate rank {estimate} is outside the domain of user {user}")]
    Domain { user: usize, estimate: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("region too large to enumerate: {terms} estimate vectors (limit {limit})")]
    Size { terms: u128, limit: u128 },
    #[error("operation supports {expected} users, got {actual}")]
    UnsupportedDimension { expected: usize, actual: usize },
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
