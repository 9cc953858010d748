use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("both classes are required, got {targets} target and {non_targets} non-target epochs")]
    SingleClass { targets: usize, non_targets: usize },
    #[error("unknown channel {0:?}")]
    UnknownChannel(String),
    #[error("sampling rate mismatch: filter designed for {filter} Hz, signal at {signal} Hz")]
    RateMismatch { filter: f64, signal: f64 },
    #[error("source rate {source_hz} Hz is not an integer multiple of {target_hz} Hz")]
    NonIntegerRatio { source_hz: f64, target_hz: f64 },
    #[error("no epoch survived extraction ({dropped} dropped)")]
    NoEpochs { dropped: usize },
    #[error("event indices must be strictly increasing (at event {0})")]
    NonMonotoneEvents(usize),
    #[error("zero variance of paired differences")]
    ZeroVariance,
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
