use std::path::Path;

/// Failure of a command, carrying its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unreadable, malformed or inconsistent input. Exit code 2.
    #[error("{0}")]
    Input(String),
    /// Fitting, prediction or another numerical step failed. Exit code 3.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Input(format!("{}: {err}", path.display()))
    }

    /// Wraps a core error raised while fitting or applying a model.
    pub fn numerical(context: &str, err: calibra_core::Error) -> Self {
        CliError::Numerical(format!("{context}: {err}"))
    }

    pub fn input(context: &str, err: impl std::fmt::Display) -> Self {
        CliError::Input(format!("{context}: {err}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
