//! Error type shared by all modules.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// A frequency signature could not be constructed.
    #[error("invalid signature: {0}")]
    InvalidSignature(String),

    /// A mode index was out of range for the given dimension.
    #[error("mode index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    /// Two inputs that must share a dimension did not.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An angle-based quantity was requested at a point where the mode
    /// carries no action, so its angle is undefined.
    #[error("action of mode {index} is zero; its angle is undefined")]
    ZeroAction { index: usize },

    /// A finite-difference stencil evaluation returned a non-finite value.
    #[error("non-finite evaluation of `{label}` at stencil offset {offset:+e} on coordinate {coordinate}")]
    StencilFailure {
        label: String,
        coordinate: usize,
        offset: f64,
    },

    /// An iterated bracket was requested beyond the supported nesting depth.
    #[error("iterated bracket order {requested} exceeds the limit {limit}")]
    OrderLimit { requested: usize, limit: usize },

    /// The input already lies on a singular plane, so singular directions
    /// are not defined for it.
    #[error("point is already singular: {0}")]
    AlreadySingular(String),

    /// A degenerate geometric configuration with no meaningful answer.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A subsystem needs at least two modes.
    #[error("subset of {0} mode(s) is too small; a subsystem needs at least two")]
    SubsetTooSmall(usize),

    /// The per-subset period census is exponential in the dimension.
    #[error("dimension {0} exceeds the period-census cap of {1}")]
    DimensionCap(usize, usize),

    /// An integer quantity (group order, period multiple) overflowed.
    #[error("integer overflow while computing {0}")]
    Overflow(&'static str),

    /// A flow or generator received arguments outside its contract.
    #[error("invalid flow input: {0}")]
    InvalidFlow(String),
}
