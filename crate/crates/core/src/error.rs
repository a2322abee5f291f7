use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("source data truncated at frame {frame_index}")]
    TruncatedSource { frame_index: usize },

    #[error("frame dimensions must be even and nonzero, got {width}x{height}")]
    BadDimensions { width: usize, height: usize },

    #[error("mixed frame dimensions or bit depths in sequence")]
    MixedDimensions,

    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("frame {width}x{height} is smaller than the {window}x{window} analysis window")]
    FrameTooSmall {
        width: usize,
        height: usize,
        window: usize,
    },

    #[error("value {value} exceeds maximum {max}")]
    ValueOutOfRange { value: u64, max: u64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("resolution or frame count exceeds counter-block field capacity: {0}")]
    CounterCapacity(String),

    #[error("key must be exactly 32 hex characters")]
    InvalidKey,

    #[error("bad container magic (not a SEVC stream)")]
    BadMagic,

    #[error("unsupported container version {0}")]
    BadVersion(u8),

    #[error("container truncated or payload incomplete")]
    TruncatedStream,

    #[error("corrupt stream: {0}")]
    CorruptStream(String),

    #[error("baseline bit count must be nonzero")]
    ZeroBaseline,

    #[error("malformed ledger csv: {0}")]
    BadLedgerCsv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
