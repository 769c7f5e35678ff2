//! Error type shared by all core modules.

/// Errors raised by the numeric core.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    /// Cosine similarity (or a retrieval query) over a zero-norm vector.
    #[error("zero vector has no direction; cosine similarity is undefined")]
    ZeroVector,

    /// Two vectors or matrix dimensions that must agree do not.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// A batch label does not reference a valid proxy column.
    #[error("label {label} out of range for {num_proxies} proxies")]
    LabelOutOfRange { label: usize, num_proxies: usize },

    /// No proxy has a positive sample in the batch; the first term of the
    /// proxy-anchor loss averages over an empty set.
    #[error("batch has no positive proxies")]
    EmptyPositiveSet,

    /// Image resolution is not a whole number of patches.
    #[error("{height}x{width} image does not divide into {patch}x{patch} patches")]
    NotDivisible {
        height: usize,
        width: usize,
        patch: usize,
    },

    /// Requested batch size exceeds the dataset.
    #[error("batch size {batch_size} exceeds dataset size {num_samples}")]
    BatchTooLarge {
        batch_size: usize,
        num_samples: usize,
    },

    /// Parameter and gradient (or optimizer state) lengths disagree.
    #[error("shape mismatch: {params} parameters vs {grads} gradient entries")]
    ShapeMismatch { params: usize, grads: usize },

    /// A query has no reference it may retrieve (empty gallery after
    /// self-exclusion).
    #[error("query {query} has no eligible reference")]
    NoEligibleReference { query: usize },

    /// A query has no same-class reference, so MAP@R is undefined (R = 0).
    #[error("query {query} has no same-class reference")]
    NoRelevantReference { query: usize },

    /// A configuration value violates its documented range.
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),

    /// NaN or infinity where only finite values are allowed.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
