use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the simulator, protocol and evaluation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("sequencing error: anchor {got} ms is not after {last} ms")]
    Sequence { last: f64, got: f64 },

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnknownExperiment(_) => 2,
            Error::Io { .. } => 3,
            Error::Config(_) | Error::Input(_) | Error::Sequence { .. } | Error::Parse { .. } => 4,
        }
    }
}
