//! Crate-wide error type.

use alloc::string::String;
use alloc::vec::Vec;

/// Errors surfaced by core operations.
///
/// `ShapeMismatch` and `InvalidArgument` indicate a misconfigured call
/// (caller bug); `Degenerate` indicates input data that cannot be processed
/// (for example an empty mask).
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor shapes do not satisfy the operation's contract.
    ShapeMismatch { op: &'static str, detail: String },
    /// A scalar argument or configuration field is out of range.
    InvalidArgument { op: &'static str, detail: String },
    /// Input data is degenerate for this operation (empty mask, no usable
    /// lights, rank-deficient system, out-of-range target index).
    Degenerate { op: &'static str, detail: String },
    /// An operation that requires a scalar (single-element) tensor got more.
    NotScalar { op: &'static str, shape: Vec<usize> },
}

impl core::fmt::Display for Error {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Error::ShapeMismatch { op, detail } => write!(f, "{op}: shape mismatch: {detail}"),
            Error::InvalidArgument { op, detail } => write!(f, "{op}: invalid argument: {detail}"),
            Error::Degenerate { op, detail } => write!(f, "{op}: degenerate input: {detail}"),
            Error::NotScalar { op, shape } => {
                write!(f, "{op}: expected scalar tensor, got shape {shape:?}")
            }
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn shape_err(op: &'static str, detail: impl core::fmt::Display) -> Error {
    Error::ShapeMismatch { op, detail: alloc::format!("{detail}") }
}

pub(crate) fn arg_err(op: &'static str, detail: impl core::fmt::Display) -> Error {
    Error::InvalidArgument { op, detail: alloc::format!("{detail}") }
}

pub(crate) fn degenerate_err(op: &'static str, detail: impl core::fmt::Display) -> Error {
    Error::Degenerate { op, detail: alloc::format!("{detail}") }
}
