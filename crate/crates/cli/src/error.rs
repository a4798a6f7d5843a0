use thiserror::Error;

/// Failure of a subcommand; the variant decides the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: malformed files, unknown config keys, invalid parameters.
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl From<tdpa_core::Error> for CliError {
    fn from(e: tdpa_core::Error) -> Self {
        use tdpa_core::Error as E;
        match e {
            E::InvalidParam(_)
            | E::UnknownPreset(_)
            | E::InvalidScenario(_)
            | E::UnknownVideo(_)
            | E::NonFiniteBox(_)
            | E::DimensionMismatch { .. }
            | E::MissingObjectId(_)
            | E::LengthMismatch { .. }
            | E::FrameOrder { .. }
            | E::FirstFrameNotZero(_) => CliError::Validation(e.to_string()),
            other => CliError::Runtime(other.into()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
