use std::io;
use std::path::{Path, PathBuf};

use ctrbias_core::Error as CoreError;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("cannot read {path}: {source}")]
    Input { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: io::Error },
    #[error("{path}, line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}, line {line}: label error: {message}")]
    Label {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("usage: {0}")]
    Usage(String),
    /// A report was written but some of its metrics could not be computed.
    #[error("metrics failed: {0}")]
    Metrics(String),
}

impl CliError {
    pub fn input(path: &Path, source: io::Error) -> Self {
        CliError::Input {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn output(path: &Path, source: io::Error) -> Self {
        CliError::Output {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for anything the caller can fix by changing flags, configs or
    /// inputs; 3 for failures while computing.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e {
                CoreError::Schema(_)
                | CoreError::Sample(_)
                | CoreError::Config(_)
                | CoreError::Dimension(_)
                | CoreError::InfeasibleRatio { .. }
                | CoreError::Truncated(_)
                | CoreError::Format(_)
                | CoreError::DigestMismatch => 2,
                _ => 3,
            },
            CliError::Input { .. }
            | CliError::Parse { .. }
            | CliError::Label { .. }
            | CliError::Json { .. }
            | CliError::Usage(_) => 2,
            CliError::Output { .. } | CliError::Metrics(_) => 3,
        }
    }
}
