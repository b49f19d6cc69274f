use thiserror::Error;

/// Errors raised by the tensor, geometry, solver and harness layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The input carries no usable signal (zero tensor, vanishing weight, ...).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A rank-one component was annihilated by an update.
    #[error("component {component} collapsed: {reason}")]
    ComponentCollapsed { component: usize, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
