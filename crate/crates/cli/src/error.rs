use std::path::PathBuf;

use thiserror::Error;

use crate::cache::CacheError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] fracmg_core::Error),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit status: 2 for anything wrong with the request, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Core(fracmg_core::Error::Config(_) | fracmg_core::Error::Usage(_)) => 2,
            CliError::Cache(_) | CliError::Output { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
