use tog_core::pipeline::{Stage, StageError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Stage(#[from] StageError),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn stage(stage: Stage, source: tog_core::Error) -> Self {
        CliError::Stage(StageError::new(stage, source))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stage(e) => match e.stage {
                Stage::Retrieval => 3,
                Stage::Alignment => 4,
                Stage::Transfer => 5,
            },
            CliError::Other(_) => 1,
        }
    }
}

impl From<tog_core::Error> for CliError {
    fn from(e: tog_core::Error) -> Self {
        CliError::Other(e.to_string())
    }
}
