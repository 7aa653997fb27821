use bsde_lab_core::LabError;
use thiserror::Error;

/// Failures of a CLI verb, each with a fixed exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    /// Picard iteration diverged; the history is part of the message and of
    /// `divergence.json`.
    #[error("solver diverged: {0}")]
    Divergence(String),
    #[error("replay mismatch: {0}")]
    Mismatch(String),
    #[error("{0}")]
    Other(String),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_OTHER: i32 = 4;
pub const EXIT_MISMATCH: i32 = 5;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Divergence(_) => EXIT_DIVERGENCE,
            CliError::Mismatch(_) => EXIT_MISMATCH,
            CliError::Other(_) => EXIT_OTHER,
        }
    }
}

/// Divergence anywhere in the chain of a core error.
pub fn divergence_history(e: &LabError) -> Option<&[f64]> {
    match e {
        LabError::Divergence { history } => Some(history),
        LabError::Interval { source, .. } => divergence_history(source),
        _ => None,
    }
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        match &e {
            LabError::Config(_) | LabError::Expr(_) => CliError::Config(e.to_string()),
            _ if divergence_history(&e).is_some() => CliError::Divergence(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(format!("i/o error: {e}"))
    }
}
