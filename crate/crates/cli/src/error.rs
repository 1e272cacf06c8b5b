//! CLI-level errors and their process exit codes.

use std::path::PathBuf;

/// Exit codes shared by every subcommand.
pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID_INPUT: i32 = 2;
pub const EXIT_GENERATOR_FAILURE: i32 = 3;
pub const EXIT_NUMERICAL_ABORT: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("external generator failed: {0}")]
    Generator(String),
    #[error(transparent)]
    Core(#[from] diorama_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Self::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::Invalid(message.into())
    }

    /// Process exit code for this error: 2 invalid input, 3 generator
    /// failure, 4 numerical abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Generator(_) => EXIT_GENERATOR_FAILURE,
            Self::Core(diorama_core::Error::Generator(_)) => EXIT_GENERATOR_FAILURE,
            Self::Core(diorama_core::Error::NonFiniteLoss { .. }) => EXIT_NUMERICAL_ABORT,
            _ => EXIT_INVALID_INPUT,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
