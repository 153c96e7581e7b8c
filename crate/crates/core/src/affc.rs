//! Accuracy-friendly mode: the pooled basic branch plus two higher-resolution
//! branches recovered by backward mapping under the basic branch's guidance.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::entropy::coder::{ContextSet, Decoder, Encoder};
use crate::entropy::{decode_attributes, encode_attributes, CodecError, QuantSpec};
use crate::seed;
use crate::transforms::{channel_project_with, ProjectionInit, TransformError};
use crate::voxel::{floor_div, Coord, SparseTensor};

/// Pooling kernel of the basic branch in this mode.
pub const AFFC_POOL_KERNEL: u32 = 3;
/// Channel width of the guided branches after compression.
pub const BRANCH_CHANNELS: usize = 2;
/// Intermediate width of the two-step branch projections.
pub const BRANCH_HIDDEN: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum AffcError {
    #[error("guide stride {guide} is not a multiple of target stride {target}")]
    StrideMismatch { guide: u32, target: u32 },
    #[error("branch coordinate {coord:?} (stride {stride}) is not covered by the basic branch")]
    Uncovered { coord: Coord, stride: u32 },
    #[error("branch declares {got} points but {expected} candidates are occupied")]
    Divergence { expected: usize, got: usize },
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffcPayload {
    pub basic: SparseTensor,
    pub branch3: SparseTensor,
    pub branch4: SparseTensor,
}

impl AffcPayload {
    /// Every branch coordinate must fall inside a basic cell.
    pub fn check_containment(&self) -> Result<(), AffcError> {
        let guide = self.basic.coord_set();
        for branch in [&self.branch3, &self.branch4] {
            let r = stride_ratio(self.basic.stride(), branch.stride())?;
            if let Some(c) = branch
                .coords()
                .iter()
                .find(|c| !guide.contains(&floor_div(**c, r as i32)))
            {
                return Err(AffcError::Uncovered {
                    coord: *c,
                    stride: branch.stride(),
                });
            }
        }
        Ok(())
    }
}

/// Seeds of the four branch projections (two per branch).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchSeeds {
    pub b3: [u64; 2],
    pub b4: [u64; 2],
}

impl BranchSeeds {
    pub fn derive(base: u64) -> Self {
        Self {
            b3: [seed::derive(base, 7), seed::derive(base, 8)],
            b4: [seed::derive(base, 9), seed::derive(base, 10)],
        }
    }
}

pub fn stride_ratio(guide: u32, target: u32) -> Result<u32, AffcError> {
    if target == 0 || guide < target || !guide.is_multiple_of(target) {
        return Err(AffcError::StrideMismatch { guide, target });
    }
    Ok(guide / target)
}

/// Keeps the target points whose parent cell at the guide stride is a guide
/// coordinate. Everything else is background and is dropped.
pub fn backward_map(
    guide: &HashSet<Coord>,
    guide_stride: u32,
    target: &SparseTensor,
) -> Result<SparseTensor, AffcError> {
    let r = stride_ratio(guide_stride, target.stride())? as i32;
    Ok(target.filter(|q| guide.contains(&floor_div(*q, r))))
}

/// All positions at the finer stride that backward mapping could keep, in
/// canonical order: guide order, then lexicographic offsets inside each cube.
pub fn preimage_candidates(guide: &[Coord], ratio: u32) -> Vec<Coord> {
    let r = ratio as i32;
    let mut out = Vec::with_capacity(guide.len() * (ratio as usize).pow(3));
    for g in guide {
        for dx in 0..r {
            for dy in 0..r {
                for dz in 0..r {
                    out.push([g[0] * r + dx, g[1] * r + dy, g[2] * r + dz]);
                }
            }
        }
    }
    out
}

fn compress_branch(
    t: &SparseTensor,
    seeds: [u64; 2],
    init: ProjectionInit,
) -> Result<SparseTensor, TransformError> {
    let hidden = channel_project_with(t, BRANCH_HIDDEN, seeds[0], init)?;
    channel_project_with(&hidden, BRANCH_CHANNELS, seeds[1], init)
}

/// Builds the three-branch payload from the stride-4 and stride-8 features and
/// the selected basic tensor.
pub fn build_affc(
    f3: &SparseTensor,
    f4: &SparseTensor,
    f4f: &SparseTensor,
    seeds: &BranchSeeds,
    init: ProjectionInit,
) -> Result<AffcPayload, AffcError> {
    let guide = f4f.coord_set();
    let b3 = backward_map(&guide, f4f.stride(), &compress_branch(f3, seeds.b3, init)?)?;
    let b4 = backward_map(&guide, f4f.stride(), &compress_branch(f4, seeds.b4, init)?)?;
    let payload = AffcPayload {
        basic: f4f.clone(),
        branch3: b3,
        branch4: b4,
    };
    payload.check_containment()?;
    Ok(payload)
}

/// Branch segment payload: `occ_len: u32`, one range-coded occupancy bin per
/// preimage candidate of the guide (one context per offset inside the cube),
/// then the attribute payload of the occupied candidates in candidate order.
/// `guide` must be in the geometry decoder's emission order.
pub fn encode_branch(
    guide: &[Coord],
    guide_stride: u32,
    branch: &SparseTensor,
    q: QuantSpec,
) -> Result<Vec<u8>, AffcError> {
    let r = stride_ratio(guide_stride, branch.stride())?;
    let present = branch.coord_set();
    let cands = preimage_candidates(guide, r);
    let cube = (r as usize).pow(3);
    let mut ctx = ContextSet::new(cube);
    let mut enc = Encoder::new();
    let mut occupied = Vec::with_capacity(branch.len());
    for (i, c) in cands.iter().enumerate() {
        let bin = present.contains(c);
        enc.encode(bin, ctx.get_mut(i % cube));
        if bin {
            occupied.push(*c);
        }
    }
    if occupied.len() != branch.len() {
        let c = *branch
            .coords()
            .iter()
            .find(|c| !cands.contains(c))
            .expect("some branch point lies outside the preimage");
        return Err(AffcError::Uncovered {
            coord: c,
            stride: branch.stride(),
        });
    }
    let occ = enc.finish();
    let ordered = branch.reorder(&occupied).expect("occupied points come from the branch");
    let attrs = encode_attributes(ordered.feats(), ordered.len(), ordered.channels(), q)?;
    let mut out = Vec::with_capacity(4 + occ.len() + attrs.len());
    out.extend_from_slice(&(occ.len() as u32).to_le_bytes());
    out.extend_from_slice(&occ);
    out.extend_from_slice(&attrs);
    Ok(out)
}

/// Inverse of [`encode_branch`] given the decoded guide geometry.
pub fn decode_branch(
    bytes: &[u8],
    guide: &[Coord],
    guide_stride: u32,
    stride: u32,
    q: QuantSpec,
) -> Result<SparseTensor, AffcError> {
    let r = stride_ratio(guide_stride, stride)?;
    if bytes.len() < 4 {
        return Err(CodecError::Truncated { offset: bytes.len() }.into());
    }
    let occ_len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    if occ_len > bytes.len() - 4 {
        return Err(CodecError::Truncated { offset: bytes.len() }.into());
    }
    let occ = &bytes[4..4 + occ_len];
    let cands = preimage_candidates(guide, r);
    let cube = (r as usize).pow(3);
    let mut ctx = ContextSet::new(cube);
    let mut dec = Decoder::new(occ).map_err(|e| e.shifted(4))?;
    let mut occupied = Vec::new();
    for (i, c) in cands.iter().enumerate() {
        if dec.decode(ctx.get_mut(i % cube)).map_err(|e| e.shifted(4))? {
            occupied.push(*c);
        }
    }
    dec.finish().map_err(|e| e.shifted(4))?;
    let attrs = &bytes[4 + occ_len..];
    let (n, c, feats) = decode_attributes(attrs, q).map_err(|e| e.shifted(4 + occ_len))?;
    if n != occupied.len() {
        return Err(AffcError::Divergence {
            expected: occupied.len(),
            got: n,
        });
    }
    if n > 0 && c == 0 {
        return Err(CodecError::Corrupt {
            offset: 4 + occ_len + 4,
            reason: "zero branch channels",
        }
        .into());
    }
    Ok(SparseTensor::new(stride, c.max(1), occupied, feats).map_err(TransformError::from)?)
}
