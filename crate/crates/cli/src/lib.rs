//! Command implementations behind the `pacing` binary.

pub mod analyze;
pub mod simulate;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{code}: {message}")]
    Analysis { code: &'static str, message: String },
    #[error("remote backend: {0}")]
    Remote(String),
    #[error("{0}")]
    Output(String),
    #[error("{0}")]
    Serve(String),
}

impl CliError {
    /// 3 for bad input, 4 for remote-backend trouble, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Analysis { .. } => 3,
            CliError::Remote(_) => 4,
            CliError::Output(_) | CliError::Serve(_) => 1,
        }
    }
}
