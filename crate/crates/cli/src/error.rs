use std::fmt;

use ultrawide_core::Error as CoreError;

/// Failure of a run, mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Invalid config value at a JSON pointer.
    Config { pointer: String, message: String },
    /// Invalid command line or unreadable input.
    Usage(String),
    /// A numerical routine did not converge; outputs may be partial.
    NonConvergence(String),
    Core(CoreError),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } | Self::Usage(_) => 2,
            Self::NonConvergence(_) => 3,
            Self::Core(e) => match e {
                CoreError::NotConverged { .. }
                | CoreError::NonMonotoneCdf { .. }
                | CoreError::GridCoverage { .. }
                | CoreError::Eigen { .. }
                | CoreError::Conditioning(_) => 3,
                CoreError::Io(_) => 1,
                _ => 2,
            },
            Self::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config { pointer, message } => write!(f, "config error at {pointer}: {message}"),
            Self::Usage(m) => write!(f, "{m}"),
            Self::NonConvergence(m) => write!(f, "non-convergence: {m}"),
            Self::Core(e) => write!(f, "{e}"),
            Self::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        Self::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Io(std::io::Error::other(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Io(std::io::Error::other(e))
    }
}
