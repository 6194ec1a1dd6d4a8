use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum KpgError {
    #[error("{block}: dimension mismatch: {detail}")]
    Dimension { block: String, detail: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("malformed event '{event_id}': {reason}")]
    MalformedEvent { event_id: String, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl KpgError {
    pub fn dim(block: &str, detail: impl Into<String>) -> Self {
        KpgError::Dimension {
            block: block.to_string(),
            detail: detail.into(),
        }
    }

    pub fn event(event_id: &str, reason: impl Into<String>) -> Self {
        KpgError::MalformedEvent {
            event_id: event_id.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, KpgError>;
