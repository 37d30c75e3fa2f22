use std::path::PathBuf;

use crate::quantum::QuantumError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("{0}")]
    Runtime(String),
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io { context: context.into(), source }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Self::Config(_) | Self::Parse { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
