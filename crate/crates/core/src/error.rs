use std::io;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed container (bad magic, unsupported version, bad tag).
    #[error("format error: {0}")]
    Format(String),

    #[error("length error: expected {expected} bytes, found {actual}")]
    Length { expected: usize, actual: usize },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("non-finite value at {0}")]
    Numeric(String),

    #[error("empty result: {0}")]
    EmptyResult(String),

    #[error("Doppler frequency {doppler_hz:.3} Hz aliases: Nyquist bound is {nyquist_hz:.3} Hz")]
    Aliasing { doppler_hz: f64, nyquist_hz: f64 },

    #[error("build error at layer `{layer}`: {reason}")]
    Build { layer: String, reason: String },

    #[error("state error: {0}")]
    State(String),

    #[error("accumulator overflow: {0}")]
    Overflow(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
