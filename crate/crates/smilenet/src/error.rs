use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] smilenet_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    RawIo(#[from] std::io::Error),

    /// Binary file with a bad magic, truncated body or inconsistent header.
    #[error("malformed file at byte {offset}: {reason}")]
    Malformed { offset: u64, reason: String },

    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// 3 for numeric divergence, 2 for configurations rejected up front,
    /// 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(smilenet_core::Error::Divergence(_)) => 3,
            Error::Core(smilenet_core::Error::Config { .. }) => 2,
            _ => 1,
        }
    }
}
