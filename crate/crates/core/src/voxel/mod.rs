//! Sparse geometric primitives: voxelization, the sparse tensor type and an
//! exact grid spatial index.

mod index;
pub mod io;
mod scene;
mod tensor;

pub use index::GridIndex;
pub(crate) use index::dist2;
pub use scene::{
    average_slots, select_survivors, voxelize, PointSource, RawPoint, VoxelScene, ATTRS,
    POINTS_PER_VOXEL,
};
pub use tensor::{floor_div, rescale_coords, Coord, SparseTensor};

/// Exclusive per-axis coordinate limit, matching the octree coder depth cap.
pub const MAX_AXIS: i32 = 1 << 21;

#[derive(Debug, thiserror::Error)]
pub enum VoxelError {
    #[error("point {index} has a non-finite value")]
    NonFinite { index: usize },
    #[error("point {index} violates source-flag semantics (flag {flag})")]
    InvalidPoint { index: usize, flag: u8 },
    #[error("point {index} falls outside the representable grid")]
    PointOutOfRange { index: usize },
    #[error("voxel size must be positive and finite, got {0}")]
    InvalidVoxelSize(f64),
    #[error("coordinate {0:?} outside [0, 2^21)")]
    OutOfRange(Coord),
    #[error("duplicate coordinate {0:?}")]
    DuplicateCoord(Coord),
    #[error("{rows} rows x {channels} channels does not match {values} values")]
    ShapeMismatch {
        rows: usize,
        channels: usize,
        values: usize,
    },
    #[error("stride must be at least 1, got {0}")]
    InvalidStride(u32),
    #[error("tensors need at least one channel")]
    ZeroChannels,
    #[error("ratio {ratio} does not divide stride {stride}")]
    InvalidRatio { stride: u32, ratio: u32 },
    #[error("query against an empty point set")]
    EmptySet,
    #[error("scene format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
