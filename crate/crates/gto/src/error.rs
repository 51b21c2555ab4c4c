use thiserror::Error;

/// Crate-wide error type.
///
/// The CLI maps variants to exit codes: `Io` -> 1, `Config` -> 2,
/// `Decode`/`Bitstream` -> 4, everything else -> 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed entropy payload, located at the block that failed.
    #[error("decode error at block ({x},{y}): {reason}")]
    Decode { x: usize, y: usize, reason: String },

    /// Malformed container before any block decodes.
    #[error("bitstream error: {0}")]
    Bitstream(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
