use std::io;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or bad input data.
    #[error("{0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] otfair_core::Error),

    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },

    /// A computation finished without meeting its own criteria.
    #[error("{0}")]
    Runtime(String),

    /// One or more oracle checks disagreed.
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            context: path.display().to_string(),
            source,
        }
    }

    /// 0 success, 1 runtime or verification failure, 2 validation error.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Core(otfair_core::Error::NotConverged { .. }) => 1,
            CliError::Core(_) => 2,
            CliError::Io { .. } => 1,
            CliError::Runtime(_) => 1,
            CliError::Verification(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
