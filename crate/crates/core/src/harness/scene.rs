use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::reconstruct::DetectionBox;
use crate::seed;
use crate::voxel::{Coord, VoxelScene, ATTRS};

const PLACEMENT_ATTEMPTS: usize = 200;
/// Background attribute draws are uniform in `[BG_LO, BG_HI]`.
pub const BG_LO: f64 = 0.9;
pub const BG_HI: f64 = 1.1;

/// Synthetic scene recipe. Sizes are in base-grid voxels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub dims: [u32; 3],
    pub objects: usize,
    /// Box `(l, w, h)` lower bounds.
    pub size_min: [f64; 3],
    pub size_max: [f64; 3],
    /// Yaw drawn uniformly from `[-yaw_max, yaw_max]`.
    pub yaw_max: f64,
    /// Occupancy probability of each non-object voxel.
    pub density: f64,
    /// Object attribute magnitude over the background draw, at least.
    pub contrast: f64,
    /// Ratio between the brightest and dimmest part of an object.
    pub spread: f64,
    pub voxel_size: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            dims: [128, 128, 32],
            objects: 3,
            size_min: [12.0, 6.0, 5.0],
            size_max: [24.0, 12.0, 10.0],
            yaw_max: std::f64::consts::PI,
            density: 0.02,
            contrast: 10.0,
            spread: 20000.0,
            voxel_size: 0.1,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidConfig(m.to_string()));
        if self.dims.iter().any(|&d| d == 0 || d > 1 << 20) {
            return bad("grid dims must lie in 1..=2^20");
        }
        if !(0.0..=1.0).contains(&self.density) {
            return bad("density must lie in [0, 1]");
        }
        if !(self.contrast >= 1.0 && self.contrast.is_finite()) {
            return bad("contrast must be finite and >= 1");
        }
        if !(self.spread >= 1.0 && self.spread.is_finite()) {
            return bad("spread must be finite and >= 1");
        }
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) || !self.yaw_max.is_finite() {
            return bad("voxel size and yaw range must be finite");
        }
        for a in 0..3 {
            if !(self.size_min[a] > 0.0 && self.size_min[a] <= self.size_max[a]) {
                return bad("box sizes need 0 < size_min <= size_max");
            }
            if self.size_max[a].is_infinite() {
                return bad("box sizes must be finite");
            }
        }
        // The box diagonal must fit so every yaw can be placed.
        let diag = (self.size_max[0].powi(2) + self.size_max[1].powi(2)).sqrt();
        if diag > self.dims[0].min(self.dims[1]) as f64 || self.size_max[2] > self.dims[2] as f64 {
            return bad("objects do not fit inside the grid");
        }
        Ok(())
    }
}

/// Per-object voxel masks and their enclosing boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub masks: Vec<Vec<Coord>>,
    pub boxes: Vec<DetectionBox>,
}

impl GroundTruth {
    pub fn union(&self) -> HashSet<Coord> {
        self.masks.iter().flatten().copied().collect()
    }
}

/// Voxels whose centres fall inside `b`, sorted.
fn rasterize(b: &DetectionBox, dims: [u32; 3]) -> Vec<Coord> {
    let r = 0.5 * (b.size[0].hypot(b.size[1]));
    let lo = |c: f64, h: f64| (c - h).floor().max(0.0) as i32;
    let hi = |c: f64, h: f64, d: u32| ((c + h).ceil() as i32).min(d as i32 - 1);
    let mut out = Vec::new();
    for x in lo(b.center[0], r)..=hi(b.center[0], r, dims[0]) {
        for y in lo(b.center[1], r)..=hi(b.center[1], r, dims[1]) {
            for z in lo(b.center[2], b.size[2] / 2.0)..=hi(b.center[2], b.size[2] / 2.0, dims[2]) {
                if b.contains([x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5]) {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

/// Deterministic synthetic scene with ground truth.
///
/// Background voxels carry attributes near one. Object voxels carry the
/// background draw times `contrast` times a gain rising from 1 to `spread`
/// across the box, so pooled object cells spread far apart on the sorted
/// activation curve while background cells bunch together.
pub fn generate_scene(spec: &SceneSpec) -> Result<(VoxelScene, GroundTruth), HarnessError> {
    spec.validate()?;
    let mut rng = seed::rng(seed::derive(spec.seed, 0x5CE7E));
    let mut boxes: Vec<DetectionBox> = Vec::with_capacity(spec.objects);
    let mut masks: Vec<Vec<Coord>> = Vec::with_capacity(spec.objects);
    let mut taken: HashSet<Coord> = HashSet::new();
    for k in 0..spec.objects {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let size: [f64; 3] =
                std::array::from_fn(|a| rng.gen_range(spec.size_min[a]..=spec.size_max[a]));
            let yaw = if spec.yaw_max > 0.0 {
                rng.gen_range(-spec.yaw_max..=spec.yaw_max)
            } else {
                0.0
            };
            let (s, c) = yaw.sin_cos();
            let ex = 0.5 * (c.abs() * size[0] + s.abs() * size[1]);
            let ey = 0.5 * (s.abs() * size[0] + c.abs() * size[1]);
            let ez = 0.5 * size[2];
            let span = |d: u32, e: f64| (e, d as f64 - e);
            let (x0, x1) = span(spec.dims[0], ex);
            let (y0, y1) = span(spec.dims[1], ey);
            let (z0, z1) = span(spec.dims[2], ez);
            let center = [
                rng.gen_range(x0..=x1),
                rng.gen_range(y0..=y1),
                rng.gen_range(z0..=z1),
            ];
            let b = DetectionBox {
                center,
                size,
                yaw,
                label: format!("object{k}"),
                score: 1.0,
            };
            let mask = rasterize(&b, spec.dims);
            // keep a one-voxel gap between objects
            let clash = mask.iter().any(|m| {
                (-1..=1).any(|dx| {
                    (-1..=1).any(|dy| {
                        (-1..=1).any(|dz| taken.contains(&[m[0] + dx, m[1] + dy, m[2] + dz]))
                    })
                })
            });
            if mask.is_empty() || clash {
                continue;
            }
            taken.extend(mask.iter().copied());
            boxes.push(b);
            masks.push(mask);
            placed = true;
            break;
        }
        if !placed {
            return Err(HarnessError::Placement {
                object: k,
                attempts: PLACEMENT_ATTEMPTS,
            });
        }
    }

    let mut voxels: BTreeMap<Coord, [f32; ATTRS]> = BTreeMap::new();
    let bg = |rng: &mut rand_chacha::ChaCha8Rng| -> [f64; ATTRS] {
        std::array::from_fn(|_| rng.gen_range(BG_LO..=BG_HI))
    };
    for (b, mask) in boxes.iter().zip(&masks) {
        for &m in mask {
            let u = b.to_local([m[0] as f64 + 0.5, m[1] as f64 + 0.5, m[2] as f64 + 0.5]);
            // position across the box in [0, 1], weighted so no two axes tie
            let t = (0..3)
                .map(|a| [0.6, 0.25, 0.15][a] * (u[a] / b.size[a] + 0.5).clamp(0.0, 1.0))
                .sum::<f64>();
            let gain = spec.contrast * spec.spread.powf(t);
            let draw = bg(&mut rng);
            voxels.insert(m, draw.map(|v| (v * gain) as f32));
        }
    }
    if spec.density > 0.0 {
        for x in 0..spec.dims[0] as i32 {
            for y in 0..spec.dims[1] as i32 {
                for z in 0..spec.dims[2] as i32 {
                    if rng.gen_bool(spec.density) && !taken.contains(&[x, y, z]) {
                        let draw = bg(&mut rng);
                        voxels.insert([x, y, z], draw.map(|v| v as f32));
                    }
                }
            }
        }
    }
    let (coords, attrs): (Vec<Coord>, Vec<[f32; ATTRS]>) = voxels.into_iter().unzip();
    let scene = VoxelScene::new([0.0; 3], spec.voxel_size, coords, attrs)?;
    Ok((scene, GroundTruth { masks, boxes }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::io::scene_to_bytes;

    #[test]
    fn no_background_means_objects_only() {
        let spec = SceneSpec {
            objects: 1,
            density: 0.0,
            ..Default::default()
        };
        let (scene, gt) = generate_scene(&spec).unwrap();
        assert_eq!(scene.coords(), gt.masks[0].as_slice());
    }

    #[test]
    fn boxes_enclose_masks_and_contrast_holds() {
        let spec = SceneSpec {
            seed: 4,
            ..Default::default()
        };
        let (scene, gt) = generate_scene(&spec).unwrap();
        let union = gt.union();
        for (b, m) in gt.boxes.iter().zip(&gt.masks) {
            assert!(!m.is_empty());
            assert!(m
                .iter()
                .all(|c| b.contains([c[0] as f64 + 0.5, c[1] as f64 + 0.5, c[2] as f64 + 0.5])));
        }
        for (c, a) in scene.coords().iter().zip(scene.attrs()) {
            let lo = a.iter().fold(f32::INFINITY, |x, &y| x.min(y)) as f64;
            if union.contains(c) {
                assert!(lo >= spec.contrast * BG_LO * 0.999);
            } else {
                assert!(lo >= BG_LO as f32 as f64 && lo <= BG_HI);
            }
        }
    }

    #[test]
    fn deterministic_bytes() {
        let spec = SceneSpec {
            seed: 11,
            ..Default::default()
        };
        let a = scene_to_bytes(&generate_scene(&spec).unwrap().0);
        let b = scene_to_bytes(&generate_scene(&spec).unwrap().0);
        assert_eq!(a, b);
    }

    #[test]
    fn infeasible_specs_rejected() {
        let spec = SceneSpec {
            dims: [16, 16, 8],
            ..Default::default()
        };
        assert!(matches!(generate_scene(&spec), Err(HarnessError::InvalidConfig(_))));
        let crowded = SceneSpec {
            dims: [30, 30, 12],
            objects: 40,
            size_min: [12.0, 6.0, 5.0],
            size_max: [12.0, 6.0, 5.0],
            ..Default::default()
        };
        assert!(matches!(generate_scene(&crowded), Err(HarnessError::Placement { .. })));
    }
}
