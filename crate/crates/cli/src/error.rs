use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("model file: {0}")]
    Model(String),
    #[error(transparent)]
    Core(#[from] otm_core::Error),
    #[error("training failed: {0}")]
    Training(String),
    #[error("{failed} of {total} verification checks failed")]
    Verification { failed: usize, total: usize },
}

impl CliError {
    /// Process exit code: 1 for usage and input problems, 2 for failed runs or checks.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) | CliError::Model(_) | CliError::Core(_) => 1,
            CliError::Training(_) | CliError::Verification { .. } => 2,
        }
    }
}

pub(crate) fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}
