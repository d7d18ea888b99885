use std::path::Path;

use thiserror::Error;

/// Failure of a command, grouped by process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flag or parameter value. Exit code 1.
    #[error("{0}")]
    Usage(String),
    /// Unreadable, malformed or inconsistent input files. Exit code 2.
    #[error("{0}")]
    Data(String),
    /// Divergence or a failed gradient check. Exit code 3.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub(crate) fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

impl From<melcep::Error> for CliError {
    fn from(e: melcep::Error) -> Self {
        use melcep::Error as E;
        match e {
            E::InvalidParameter(_) => CliError::Usage(e.to_string()),
            E::InvalidInput(_) | E::UndefinedReference => CliError::Data(e.to_string()),
            E::InvalidState(_) | E::Divergence { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
