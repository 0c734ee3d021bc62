use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("zero measure")]
    ZeroMeasure,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid weight {0}: weights must be finite and > 0")]
    InvalidWeight(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The offset law has no closed-form characteristic function or moments.
    #[error("unsupported for this offset law: {0}")]
    Unsupported(String),

    /// Oracle evaluated outside the domain where its closed form is valid.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("node cap of {cap} exceeded")]
    NodeCap { cap: usize },

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
