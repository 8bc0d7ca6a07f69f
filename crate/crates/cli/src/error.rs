use std::path::{Path, PathBuf};

use thiserror::Error;

/// Exit status contract: 1 for bad data, 2 for I/O, 64 for usage.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot open {}: {source}", path.display())]
    Open {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {what}: {source}")]
    Write {
        what: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Data { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 64,
            CliError::Open { .. } | CliError::Write { .. } => 2,
            CliError::Data { .. } | CliError::Invalid(_) => 1,
        }
    }

    pub fn data(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Data {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }

    pub fn invalid(err: impl std::fmt::Display) -> Self {
        CliError::Invalid(err.to_string())
    }
}
