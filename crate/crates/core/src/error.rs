use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("index {index} is outside the explicit spectrum of length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("bandwidth {bandwidth} is outside the admissible range {min}..={max}")]
    BandwidthOutOfRange { bandwidth: usize, min: usize, max: usize },

    #[error("hull table fingerprint mismatch: expected {expected}, found {found}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("corrupted hull table: {0}")]
    CorruptedTable(String),

    #[error("resource error: {0}")]
    Resource(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
