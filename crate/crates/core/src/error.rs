use thiserror::Error;

/// Error type shared by every module of the toolkit.
#[derive(Debug, Error)]
pub enum PhaseError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),

    #[error("zero norm: {0}")]
    ZeroNorm(&'static str),

    #[error("combinatorial guard exceeded: {0}")]
    GuardExceeded(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PhaseError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> PhaseError {
    PhaseError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
