use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_UNSATISFIABLE: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("{0}")]
    Unsatisfiable(String),

    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Unsatisfiable(_) => EXIT_UNSATISFIABLE,
            CliError::CheckFailed(_) | CliError::Io(_) | CliError::Other(_) => EXIT_CHECK_FAILED,
        }
    }
}

impl From<mbcast::Error> for CliError {
    fn from(e: mbcast::Error) -> Self {
        match e {
            mbcast::Error::Unsatisfiable { .. } => CliError::Unsatisfiable(e.to_string()),
            mbcast::Error::Domain { .. } | mbcast::Error::Config { .. } => CliError::Usage(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Other(e.to_string())
    }
}
