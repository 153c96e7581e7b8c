//! Residual channel and object-level point cloud generation.
//!
//! The edge enumerates a lattice of candidate points around every kept
//! coordinate, flags the candidates lying near the captured surface, and
//! ships the flag positions. The cloud re-enumerates the identical lattice
//! from the decoded geometry, keeps the flagged candidates, detaches them
//! per detection box and densifies each object patch by patch.

mod densify;
mod objects;
mod residual;

pub use densify::{
    chamfer, densify_object, densify_ref, patch_partition, write_ply, Densifier, RefDensifier, PATCH_SIZE, UP_RATIO,
};
pub use objects::{read_boxes, sopcg, write_boxes, DetachedObject, DetectionBox};
pub use residual::{assign_surface_flags, cube_upsample, grid_threshold, Candidates, ResidualFlags};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ReconstructError {
    #[error("empty point set")]
    EmptySet,
    #[error("invalid parameter: {0}")]
    InvalidParam(&'static str),
    #[error("flag stream covers {got} candidates but {expected} were enumerated")]
    Alignment { expected: usize, got: usize },
    #[error("flag position {position} not below candidate count {count}")]
    PositionOutOfRange { position: u32, count: u32 },
    #[error("too many candidates ({0}) for 32-bit flag positions")]
    TooManyCandidates(usize),
    #[error("invalid detection box {index}: {reason}")]
    InvalidBox { index: usize, reason: &'static str },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Lattice scope, lattice density and surface threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualParams {
    /// Half-width of the cube around each seed, base-grid units.
    pub scope: u32,
    /// Lattice subdivisions per base-grid unit.
    pub density: u32,
    /// Surface distance threshold, base-grid units.
    pub d_s: f64,
}

impl Default for ResidualParams {
    fn default() -> Self {
        Self {
            scope: 2,
            density: 1,
            d_s: 0.4,
        }
    }
}

impl ResidualParams {
    pub fn validate(&self) -> Result<(), ReconstructError> {
        if self.density == 0 {
            return Err(ReconstructError::InvalidParam("density must be at least 1"));
        }
        if !(self.d_s >= 0.0 && self.d_s.is_finite()) {
            return Err(ReconstructError::InvalidParam("d_s must be finite and >= 0"));
        }
        Ok(())
    }
}
