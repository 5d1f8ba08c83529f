use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A network configuration collapses the spatial dimensions.
    #[error("invalid network config at {stage}: {reason}")]
    Config { stage: String, reason: String },

    /// A loss or gradient became NaN or infinite.
    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("incomplete selection report: {0}")]
    IncompleteReport(String),

    /// Trace and network disagree, which means the caller mixed up objects.
    #[error("internal consistency: {0}")]
    Internal(String),
}
