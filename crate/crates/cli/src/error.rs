//! Errors for file parsing and CLI-level validation.

/// Errors raised while reading or writing artifact files.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("bad magic {found:?}; not a feature file")]
    BadMagic { found: [u8; 8] },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("file truncated: {context}")]
    TruncatedFile { context: &'static str },

    #[error("{trailing} trailing bytes after the declared payload")]
    TrailingData { trailing: usize },

    #[error("non-finite value at row {row}")]
    NonFiniteValue { row: usize },

    #[error("CSV parse error at line {line}: {message}")]
    CsvParse { line: usize, message: String },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(&'static str),

    #[error("checkpoint/config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("invalid split manifest: {0}")]
    InvalidSplits(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Core(#[from] pirt_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("manifest JSON: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
