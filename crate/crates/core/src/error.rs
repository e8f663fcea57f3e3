use thiserror::Error;

/// Errors raised across the lab.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("exact enumeration over n = {n} exceeds the cap of {cap}")]
    Capacity { n: usize, cap: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("separator infeasible: no neuron matches the ramp for r = {r}")]
    SeparatorInfeasible { r: i32 },

    #[error("non-finite value encountered: {0}")]
    Numeric(String),

    #[error("IDX parse error at byte offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("missing snapshots: {0}")]
    MissingSnapshots(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
