use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("constraint violation: {0}")]
    ConstraintViolation(String),

    #[error("data corruption: {0}")]
    DataCorruption(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    /// A subject reply that could not be mapped to an action. Retriable.
    #[error("could not parse reply ({reason}): {raw:?}")]
    Parse { raw: String, reason: String },

    #[error("subject aborted the episode: {0}")]
    SubjectAborted(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("unsupported checkpoint version {0}")]
    Version(u64),

    #[error("corrupt checkpoint: {0}")]
    Corruption(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
