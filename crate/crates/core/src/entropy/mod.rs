//! Entropy layer: adaptive binary range coder, octree geometry codec,
//! quantized attribute codec and differential flag-position codec.

mod attributes;
pub mod coder;
mod geometry;
mod residual;

pub use attributes::{
    attribute_shape, decode_attributes, encode_attributes, QuantSpec, DEFAULT_STEP, MAX_LEVEL,
};
pub use geometry::{
    canonical_order, decode_geometry, encode_geometry, morton, same_set, Bbox, EncodedGeometry,
    GeometryCoder, OctreeCoder, MAX_DEPTH,
};
pub use residual::{decode_residual, encode_residual, flags_to_positions, from_deltas, to_deltas};

use crate::voxel::Coord;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CodecError {
    #[error("coordinate {0:?} lies outside the bounding box")]
    OutOfBbox(Coord),
    #[error("duplicate coordinate {0:?}")]
    DuplicateCoord(Coord),
    #[error("too large: {0}")]
    TooLarge(&'static str),
    #[error("value {index} is not finite")]
    NonFinite { index: usize },
    #[error("value {index} quantizes beyond the supported range")]
    ValueOutOfRange { index: usize },
    #[error("quantization step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("positions must strictly increase (index {index})")]
    NotIncreasing { index: usize },
    #[error("stream truncated at byte {offset}")]
    Truncated { offset: usize },
    #[error("{len} byte stream has trailing data after byte {consumed}")]
    TrailingBytes { consumed: usize, len: usize },
    #[error("corrupt stream at byte {offset}: {reason}")]
    Corrupt { offset: usize, reason: &'static str },
}

impl CodecError {
    /// Re-bases byte offsets after a payload header of `by` bytes.
    pub(crate) fn shifted(self, by: usize) -> Self {
        match self {
            CodecError::Truncated { offset } => CodecError::Truncated { offset: offset + by },
            CodecError::TrailingBytes { consumed, len } => CodecError::TrailingBytes {
                consumed: consumed + by,
                len: len + by,
            },
            CodecError::Corrupt { offset, reason } => CodecError::Corrupt {
                offset: offset + by,
                reason,
            },
            other => other,
        }
    }
}
