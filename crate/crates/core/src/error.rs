use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric error in {location}: {message}")]
    Numeric { location: String, message: String },

    #[error("logic error: {0}")]
    Logic(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Failures specific to reading a checkpoint file.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,

    #[error("unsupported checkpoint version {found} (reader supports {supported})")]
    Version { found: u32, supported: u32 },

    #[error("schema fingerprint mismatch: checkpoint {checkpoint}, dataset {dataset}")]
    Fingerprint { checkpoint: String, dataset: String },

    #[error("truncated checkpoint: {0}")]
    Truncated(String),

    #[error("malformed checkpoint header: {0}")]
    Header(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn logic(msg: impl Into<String>) -> Self {
        Error::Logic(msg.into())
    }

    pub fn numeric(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Numeric {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Logic(_) => 1,
            Error::Numeric { .. } => 3,
            Error::Data(_)
            | Error::Lookup(_)
            | Error::Checkpoint(_)
            | Error::Io(_)
            | Error::Json(_) => 2,
        }
    }
}
