use thiserror::Error;
use timecatcher_core::Error as CoreError;

/// Command failure, split by the exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, bad configuration or unreadable inputs (exit 2).
    #[error("{0}")]
    Usage(String),
    /// Invalid input rejected by the core library (exit 2).
    #[error(transparent)]
    Input(CoreError),
    /// Failure while running (exit 1).
    #[error(transparent)]
    Runtime(#[from] CoreError),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Input(_) => 2,
            CliError::Runtime(CoreError::Config(_)) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Input(e) | CliError::Runtime(e) => e.kind(),
        }
    }

    /// `error[<kind>]: <message>` on one line.
    pub fn line(&self) -> String {
        let msg = self.to_string().lines().map(str::trim).collect::<Vec<_>>().join("; ");
        format!("error[{}]: {msg}", self.kind())
    }
}

/// Marks a core error as caused by the caller's inputs.
pub(crate) fn input(e: CoreError) -> CliError {
    CliError::Input(e)
}
