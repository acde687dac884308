use std::io;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("input is silent; level and SNR are undefined")]
    SilentInput,
    #[error("expected sample rate {expected} Hz, got {got} Hz")]
    SampleRate { expected: u32, got: u32 },
    #[error("input too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("audiogram shape is ambiguous: matches {0:?}")]
    AmbiguousShape(Vec<String>),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("unknown id `{0}`")]
    UnknownId(String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("bad file format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Wav(#[from] hound::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
