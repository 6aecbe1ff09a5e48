//! Error taxonomy shared across the crate.
//!
//! `Numeric` marks internal numeric failures; everything else is a bad input
//! or bad configuration. The CLI maps that split onto exit codes 1 and 2.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input that could not be read at all (bad header, bad bytes).
    #[error("parse error: {0}")]
    Parse(String),
    /// Input read fine but violates the expected schema.
    #[error("schema error: {0}")]
    Schema(String),
    /// Input ended before the declared payload was complete.
    #[error("truncated input: {0}")]
    Truncation(String),
    /// Output could not be written.
    #[error("write error: {0}")]
    Write(String),
    /// Non-finite or otherwise invalid numeric state.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Dimension mismatch between buffers that must agree.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// Invalid configuration or inconsistent inputs.
    #[error("config error: {0}")]
    Config(String),
    /// An anchor set required by the contrastive loss is empty.
    #[error("empty anchor set: {0}")]
    Anchor(String),
}

impl Error {
    /// Process exit code the CLI uses for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
