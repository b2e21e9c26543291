//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor extents do not agree for the attempted operation.
    #[error("shape mismatch: {left:?} vs {right:?}")]
    Shape { left: Vec<usize>, right: Vec<usize> },

    /// Two sequences that must be time-aligned have different lengths.
    #[error("time alignment mismatch: {left} vs {right} frames")]
    Alignment { left: usize, right: usize },

    /// Input waveform shorter than one subsampling window.
    #[error("input too short: {len} samples, need at least {min}")]
    InputTooShort { len: usize, min: usize },

    /// Target cannot be emitted within the available frames under CTC rules.
    #[error("infeasible CTC target: {frames} frames cannot emit {required} symbols")]
    InfeasibleTarget { frames: usize, required: usize },

    /// Invalid model or experiment configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A corpus record or auxiliary feature is missing or malformed.
    #[error("data error: {0}")]
    Data(String),

    /// A file did not parse under its declared format.
    #[error("format error: {0}")]
    Format(String),

    /// A per-speaker estimation problem is ill-posed.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// WER is undefined on an empty reference corpus.
    #[error("word error rate undefined: empty reference corpus")]
    UndefinedRate,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
