use std::process::ExitCode;

use cfgen_core::Error;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Core(#[from] Error),

    /// A core error raised while loading a model file.
    #[error("{path}: {source}")]
    Model { path: String, source: Error },

    #[error("{0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub type CliResult<T> = Result<T, CliError>;

/// Exit status for a failed verification suite.
pub const VERIFY_FAILED: u8 = 1;

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Model { .. } => 3,
            CliError::Core(e) => match e {
                Error::InvalidQuery(_)
                | Error::LengthMismatch { .. }
                | Error::Unsupported(_)
                | Error::Infeasible(_)
                | Error::Parse(_) => 2,
                Error::InvalidModel(_) | Error::DependsOnExogenous => 3,
                Error::TooLarge { .. } => 4,
                Error::StableUndefined { .. } | Error::ImpossibleEvidence => 5,
            },
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code())
    }
}
