use alloc::string::String;

/// Errors raised by the detector core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("series too short: {len} points, need at least {min}")]
    SeriesTooShort { len: usize, min: usize },
    #[error("window length {window} exceeds region length {region}")]
    WindowTooLong { window: usize, region: usize },
    #[error("length {len} is not divisible by patch size {patch}")]
    NotDivisible { len: usize, patch: usize },
    #[error("STFT frame length {frame_len} invalid for window length {len} and {bins} bins")]
    Frame {
        frame_len: usize,
        len: usize,
        bins: usize,
    },
    #[error("no positive labels; metric is undefined")]
    NoPositiveLabels,
    #[error("expected exactly one anomaly range, found {0}")]
    RangeCount(usize),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("metadata: {0}")]
    Metadata(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = core::result::Result<T, Error>;
