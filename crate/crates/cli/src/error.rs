use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Solver {
        context: String,
        source: srhlab_core::Error,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0} invariant violation(s)")]
    Violations(usize),
}

impl CliError {
    pub fn config(path: &str, err: impl std::fmt::Display) -> Self {
        CliError::Config(format!("{path}: {err}"))
    }

    pub fn solver(context: impl Into<String>, source: srhlab_core::Error) -> Self {
        CliError::Solver {
            context: context.into(),
            source,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 for configuration and file problems, 2 for solver failures, 3 when
    /// invariant violations were found.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::Solver { .. } => 2,
            CliError::Violations(_) => 3,
        }
    }
}
