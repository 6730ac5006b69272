//! Error type shared across the crate.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors raised by lattice, tensor, model and quantizer operations.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Operand shapes incompatible for the named operation.
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// backward() called on a tensor that is not a scalar.
    NotScalar { shape: Vec<usize> },
    /// backward() called twice on the same tape.
    TapeConsumed,
    /// An input that must be non-empty was empty.
    EmptyInput(&'static str),
    /// A token id fell outside the vocabulary.
    TokenOutOfRange { token: usize, vocab: usize },
    /// Combinatorial guard exceeded (path enumeration).
    SizeGuard { limit: usize, got: usize },
    /// Pruning bounds violate their structural invariants.
    InvalidBounds(String),
    /// Anything else with a one-line description.
    Invalid(String),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: shape mismatch {lhs:?} vs {rhs:?}")
            }
            CoreError::NotScalar { shape } => {
                write!(f, "backward requires a scalar loss, got shape {shape:?}")
            }
            CoreError::TapeConsumed => write!(f, "tape already consumed by backward"),
            CoreError::EmptyInput(what) => write!(f, "empty input: {what}"),
            CoreError::TokenOutOfRange { token, vocab } => {
                write!(f, "token {token} out of range for vocabulary of {vocab}")
            }
            CoreError::SizeGuard { limit, got } => {
                write!(f, "size guard exceeded: {got} > {limit}")
            }
            CoreError::InvalidBounds(msg) => write!(f, "invalid prune bounds: {msg}"),
            CoreError::Invalid(msg) => write!(f, "{msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CoreError {}

pub type Result<T> = core::result::Result<T, CoreError>;
