use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("frame index {index} out of range for sequence of {len} frames")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("collar window [{start}, {end}] around frame {center} exceeds sequence of {len} frames")]
    WindowOutOfBounds {
        center: usize,
        start: i64,
        end: i64,
        len: usize,
    },

    #[error("collar windows of change points {first} and {second} overlap")]
    CollarOverlap { first: usize, second: usize },

    #[error("enumeration of {configurations} configurations exceeds the limit of {limit}")]
    TooLarge { configurations: u128, limit: u128 },

    #[error("non-finite value encountered: {0}")]
    Numeric(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("stream protocol violation: {0}")]
    Protocol(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by bad user input or configuration, as opposed
    /// to numeric failures inside a computation.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Numeric(_) | Error::Divergence(_))
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
