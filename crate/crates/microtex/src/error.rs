use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("weights format: {0}")]
    Format(String),
    #[error("weights schema: {0}")]
    Schema(String),
    #[error("weights corrupted: {0}")]
    Corruption(String),
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error("image {path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("csv {path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] microtex_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 2 for configuration and input problems, 1 for failures inside the
    /// pipeline itself.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
