use micromacro_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    /// A physics check failed or a run produced nothing usable.
    #[error("{0}")]
    Physics(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 2,
            _ => 1,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidGain(_)
            | CoreError::InvalidParameter { .. }
            | CoreError::CutoffTooLarge { .. }
            | CoreError::UnnormalizedWeights(_)
            | CoreError::DuplicateBasis(_)
            | CoreError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Physics(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
