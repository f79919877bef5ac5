use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters or an inconsistent scenario.
    #[error("configuration error: {0}")]
    Config(String),

    /// A malformed control-matrix or plot file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The simulation reached a state that admission logic should make
    /// impossible, e.g. releasing a port on an empty partition.
    #[error("internal consistency fault: {0}")]
    Fault(String),

    #[error("state space of {states} occupancy vectors exceeds the limit of {limit}")]
    StateSpaceTooLarge { states: u128, limit: usize },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
