use std::collections::HashSet;

use super::{ReconstructError, ResidualParams};
use crate::voxel::{Coord, GridIndex};

/// Ordered candidate lattice. Points are stored scaled by `density` so the
/// enumeration is exact integer arithmetic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidates {
    pub density: u32,
    pub scaled: Vec<[i64; 3]>,
}

impl Candidates {
    pub fn len(&self) -> usize {
        self.scaled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scaled.is_empty()
    }

    /// Candidate `i` in base-grid units.
    pub fn point(&self, i: usize) -> [f64; 3] {
        let d = self.density as f64;
        let s = self.scaled[i];
        [s[0] as f64 / d, s[1] as f64 / d, s[2] as f64 / d]
    }

    pub fn points(&self) -> Vec<[f64; 3]> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
}

/// Positions of the 1-flags among `count` candidates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidualFlags {
    pub count: u32,
    pub positions: Vec<u32>,
}

impl ResidualFlags {
    pub fn new(count: u32, positions: Vec<u32>) -> Result<Self, ReconstructError> {
        for (i, &p) in positions.iter().enumerate() {
            if p >= count {
                return Err(ReconstructError::PositionOutOfRange { position: p, count });
            }
            if i > 0 && positions[i - 1] >= p {
                return Err(ReconstructError::InvalidParam("flag positions must increase"));
            }
        }
        Ok(Self { count, positions })
    }
}

/// Cube lattice around each seed: offsets in `[-s, s]` at spacing `1/d`,
/// seeds visited in lexicographic order, offsets lexicographically, first
/// occurrence kept.
pub fn cube_upsample(seeds: &[Coord], scope: u32, density: u32) -> Candidates {
    let d = density.max(1) as i64;
    let r = scope as i64 * d;
    let mut sorted: Vec<Coord> = seeds.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let per = ((2 * r + 1) as usize).pow(3);
    let mut seen: HashSet<[i64; 3]> = HashSet::with_capacity(sorted.len() * per.min(1 << 12));
    let mut scaled = Vec::with_capacity(sorted.len() * per.min(1 << 12));
    for c in sorted {
        let base = [c[0] as i64 * d, c[1] as i64 * d, c[2] as i64 * d];
        for dx in -r..=r {
            for dy in -r..=r {
                for dz in -r..=r {
                    let p = [base[0] + dx, base[1] + dy, base[2] + dz];
                    if seen.insert(p) {
                        scaled.push(p);
                    }
                }
            }
        }
    }
    Candidates {
        density: density.max(1),
        scaled,
    }
}

/// Flag `i` is set iff candidate `i` lies within `d_s` of the scene.
pub fn assign_surface_flags(
    cands: &Candidates,
    scene: &GridIndex,
    d_s: f64,
) -> Result<ResidualFlags, ReconstructError> {
    if scene.is_empty() {
        return Err(ReconstructError::EmptySet);
    }
    let count = u32::try_from(cands.len())
        .map_err(|_| ReconstructError::TooManyCandidates(cands.len()))?;
    let positions = (0..cands.len())
        .filter(|&i| scene.any_within(cands.point(i), d_s))
        .map(|i| i as u32)
        .collect();
    Ok(ResidualFlags { count, positions })
}

/// Converts a metric threshold into base-grid units.
pub fn grid_threshold(d_metric: f64, voxel_size: f64) -> f64 {
    d_metric / voxel_size
}

impl ResidualParams {
    pub fn candidates(&self, seeds: &[Coord]) -> Candidates {
        cube_upsample(seeds, self.scope, self.density)
    }
}
