use thiserror::Error;

/// Errors produced by the separation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("WAV error: {0}")]
    Wav(#[from] hound::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("reference source {0} is degenerate (zero energy or linearly dependent)")]
    DegenerateReference(usize),

    #[error("instance generation failed: {0}")]
    Generation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
