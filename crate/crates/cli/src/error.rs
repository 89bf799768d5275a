use thiserror::Error;

/// CLI failures with stable exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration or flags (exit 2).
    #[error("configuration error: {0}")]
    Config(String),
    /// Malformed input data (exit 2).
    #[error("malformed input: {0}")]
    Input(String),
    /// File system failures and unusable cache files (exit 3).
    #[error("i/o error: {0}")]
    Io(String),
    /// The hull method was requested without a table or the means to build one (exit 4).
    #[error("hull table required: {0}")]
    HullMissing(String),
    /// Anything the numerical core rejects at run time (exit 1).
    #[error(transparent)]
    Core(#[from] rhm_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Io(_) => 3,
            CliError::Core(rhm_core::Error::FingerprintMismatch { .. } | rhm_core::Error::CorruptedTable(_)) => 3,
            CliError::HullMissing(_) => 4,
            CliError::Core(_) => 1,
        }
    }

    pub(crate) fn io(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}
