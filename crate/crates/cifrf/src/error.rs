use std::path::{Path, PathBuf};

/// Failures surfaced by the command-line driver.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] cifrf_core::Error),
    #[error("schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("validation error in {path} at row {row}: {message}")]
    Validation { path: PathBuf, row: usize, message: String },
    #[error("parse error in {path} at row {row}: {message}")]
    Parse { path: PathBuf, row: usize, message: String },
    #[error("invalid file {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    /// 1 for invalid input or configuration, 2 for runtime and estimation
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(cifrf_core::Error::Estimation(_)) => 2,
            CliError::Read { .. } | CliError::Write { .. } => 2,
            _ => 1,
        }
    }

    pub(crate) fn schema(path: &Path, message: impl Into<String>) -> Self {
        CliError::Schema { path: path.to_path_buf(), message: message.into() }
    }

    pub(crate) fn format(path: &Path, message: impl ToString) -> Self {
        CliError::Format { path: path.to_path_buf(), message: message.to_string() }
    }

    pub(crate) fn read(path: &Path, source: std::io::Error) -> Self {
        CliError::Read { path: path.to_path_buf(), source }
    }

    pub(crate) fn write(path: &Path, source: std::io::Error) -> Self {
        CliError::Write { path: path.to_path_buf(), source }
    }
}
