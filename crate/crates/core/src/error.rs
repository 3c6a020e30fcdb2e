use std::path::PathBuf;

/// Errors raised across the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    #[error("parse error at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },

    #[error("corrupt payload: {0}")]
    CorruptPayload(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Transmission over a link with zero capacity never completes.
    #[error("infinite transmission time (zero capacity)")]
    InfiniteTime,

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Process exit status: 2 for bad input or files, 3 for runtime failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::Parse { .. } | Error::Io { .. } | Error::CorruptPayload(_) => 2,
            Error::Numeric(_) | Error::InfiniteTime | Error::Contract(_) | Error::OutOfBounds(_) => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
