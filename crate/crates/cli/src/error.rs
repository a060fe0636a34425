use thiserror::Error;

/// Failure classes that map onto process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0:#}")]
    Config(anyhow::Error),
    #[error("stage `{stage}` failed: {source:#}")]
    Stage { stage: String, source: anyhow::Error },
    #[error("artifact integrity check failed: {0}")]
    Integrity(String),
}

impl CliError {
    pub fn stage(stage: &str, source: impl Into<anyhow::Error>) -> Self {
        CliError::Stage { stage: stage.to_owned(), source: source.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Stage { .. } => 2,
            CliError::Integrity(_) => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
