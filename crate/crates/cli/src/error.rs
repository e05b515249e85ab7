use thiserror::Error;

/// CLI failure; [`CliError::exit_code`] gives the process status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    /// A toolkit error tagged with the stage that raised it.
    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: ruelle::Error,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stage { source, .. } => match source {
                ruelle::Error::Argument(_) => 2,
                ruelle::Error::Evaluation(_) | ruelle::Error::Solver(_) | ruelle::Error::NoConvergence { .. } => 3,
                ruelle::Error::Precondition(_) => 4,
            },
            CliError::Io(_) => 1,
        }
    }
}

/// Attach a stage tag to a toolkit result.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> StageExt<T> for ruelle::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}
