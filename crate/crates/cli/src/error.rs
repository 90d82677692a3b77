use std::path::PathBuf;

/// Failures of a CLI command, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unreadable or invalid configuration (exit code 1).
    #[error("config error: {0}")]
    Config(String),
    /// Anything that fails while running (exit code 2).
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.into().display()))
    }
}

impl From<casper_core::Error> for CliError {
    fn from(e: casper_core::Error) -> Self {
        match e {
            casper_core::Error::InvalidParameter(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
