use std::path::PathBuf;

use kedge_core::Error as CoreError;
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const IO: u8 = 1;
    pub const VALIDATION: u8 = 2;
    pub const DIVERGED: u8 = 3;
    pub const MISSING_ARTIFACT: u8 = 4;
    pub const USAGE: u8 = 64;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing artifact {}: run `{}` first", .path.display(), .hint)]
    MissingArtifact { path: PathBuf, hint: &'static str },

    #[error("config has no evaluations")]
    NoEvaluations,
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e {
                CoreError::Io { .. } => exit::IO,
                CoreError::Diverged { .. } | CoreError::NonFiniteActivation { .. } | CoreError::Numerical(_) => {
                    exit::DIVERGED
                }
                _ => exit::VALIDATION,
            },
            CliError::Config(_) => exit::VALIDATION,
            CliError::MissingArtifact { .. } | CliError::NoEvaluations => exit::MISSING_ARTIFACT,
        }
    }
}
