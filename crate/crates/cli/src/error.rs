use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{context}: {source}")]
    Model {
        context: String,
        #[source]
        source: convex_trials_core::Error,
    },
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit code: 2 validation, 3 size cap exceeded, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model { source, .. } if source.is_cap_exceeded() => 3,
            CliError::Model { .. } | CliError::Validation(_) | CliError::Parse { .. } => 2,
            CliError::Io { .. } => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches a context string to core errors.
pub trait Context<T> {
    fn context(self, what: impl Into<String>) -> CliResult<T>;
}

impl<T> Context<T> for convex_trials_core::Result<T> {
    fn context(self, what: impl Into<String>) -> CliResult<T> {
        self.map_err(|source| CliError::Model { context: what.into(), source })
    }
}
