use std::path::PathBuf;

use cems::{CemsError, ErrorCategory};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("io error on '{}': {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Geometry(_) => 4,
            CliError::Io { .. } => 5,
        }
    }
}

impl From<CemsError> for CliError {
    fn from(e: CemsError) -> Self {
        let msg = e.to_string();
        match e.category() {
            ErrorCategory::Config => CliError::Config(msg),
            ErrorCategory::Data => CliError::Data(msg),
            ErrorCategory::Geometry => CliError::Geometry(msg),
        }
    }
}
