use std::path::{Path, PathBuf};

use skelcon_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error("{0}")]
    Divergence(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Io { .. } => 4,
            CliError::Internal(_) => 1,
        }
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Divergence(_) => CliError::Divergence(e.to_string()),
            CoreError::Io(source) => CliError::Io {
                path: PathBuf::new(),
                source,
            },
            CoreError::Integrity(_) => CliError::Internal(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Attaches `path` to I/O failures coming out of the core library.
pub trait WithPath<T> {
    fn at(self, path: impl AsRef<Path>) -> Result<T>;
}

impl<T> WithPath<T> for skelcon_core::Result<T> {
    fn at(self, path: impl AsRef<Path>) -> Result<T> {
        self.map_err(|e| match e {
            CoreError::Io(source) => CliError::io(path, source),
            other => other.into(),
        })
    }
}

impl<T> WithPath<T> for std::io::Result<T> {
    fn at(self, path: impl AsRef<Path>) -> Result<T> {
        self.map_err(|e| CliError::io(path, e))
    }
}
