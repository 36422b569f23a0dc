use std::path::PathBuf;

/// Errors produced by the driftwatch library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller violated an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Parameters or configuration are unusable.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data is malformed.
    #[error("data error at frame {frame}: {message}")]
    Data { frame: u64, message: String },

    /// A geometric estimate could not be produced (e.g. singular transform).
    #[error("estimation failure: {0}")]
    Estimation(String),

    #[error("mask has no set pixels")]
    EmptyMask,

    #[error("no containers to aggregate")]
    NoContainers,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(frame: u64, message: impl Into<String>) -> Self {
        Error::Data {
            frame,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
