use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    Domain { op: &'static str, value: f64 },
    /// A NaN or infinity was produced inside a differentiable primitive.
    NonFinite { primitive: &'static str, segment: String },
    /// Finite-difference check over a parameter vector with no entries.
    EmptyParameterSpace,
    /// Image or memory dimensions disagree.
    ResolutionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    PixelOutOfBounds { u: usize, v: usize },
    /// Timestamps or sample depths that must increase do not.
    NotIncreasing { what: &'static str, index: usize },
    EmptyBatch(&'static str),
    /// A camera pose lies outside the scene bounds or inside geometry.
    PoseOutsideScene { index: usize },
    InvalidConfig { key: &'static str, reason: &'static str },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain { op, value } => write!(f, "{op}: input {value} outside domain"),
            Error::NonFinite { primitive, segment } => {
                write!(f, "non-finite value in {primitive} (segment {segment})")
            }
            Error::EmptyParameterSpace => f.write_str("empty parameter space"),
            Error::ResolutionMismatch { expected, found } => write!(
                f,
                "resolution mismatch: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::PixelOutOfBounds { u, v } => write!(f, "pixel ({u}, {v}) out of bounds"),
            Error::NotIncreasing { what, index } => {
                write!(f, "{what} not strictly increasing at index {index}")
            }
            Error::EmptyBatch(what) => write!(f, "empty batch: {what}"),
            Error::PoseOutsideScene { index } => {
                write!(f, "pose {index} lies outside the scene free space")
            }
            Error::InvalidConfig { key, reason } => write!(f, "invalid value for {key}: {reason}"),
        }
    }
}

impl core::error::Error for Error {}
