//! Feature transforms standing in for learned sparse-convolution layers.
//!
//! Every transform is a pure, seeded function of its input tensor. The codec
//! only depends on the coordinate and channel shapes these produce, so the
//! reference versions use fixed aggregation plus seeded linear projections.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::voxel::{floor_div, Coord, SparseTensor, VoxelError, VoxelScene, ATTRS};

/// Seed value that, with equal in/out widths, selects the identity projection.
pub const IDENTITY_SEED: u64 = 0;

/// Channel widths of the four reference extraction stages.
pub const CASCADE_WIDTHS: [usize; 4] = [16, 32, 64, 64];

#[derive(Debug, thiserror::Error)]
pub enum TransformError {
    #[error("upsampling needs an even stride, got {0}")]
    OddStride(u32),
    #[error("pooling kernel must be at least 1")]
    ZeroKernel,
    #[error("expected {expected} input channels, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("output channels must be at least 1")]
    ZeroChannels,
    #[error(transparent)]
    Voxel(#[from] VoxelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Maxpool,
    ChannelProject,
    SpatialUpsample,
    CascadeStage,
}

/// How projection weights are drawn from the seed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionInit {
    /// `W`, `b` uniform in [-1, 1] scaled by 1/sqrt(in).
    #[default]
    Symmetric,
    /// `W` uniform in [0, 2/in], `b` uniform in [0, 1/in]. The map is then
    /// monotone in every input channel, so salient regions stay salient.
    NonNegative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub kind: TransformKind,
    #[serde(default = "one")]
    pub in_channels: usize,
    #[serde(default = "one")]
    pub out_channels: usize,
    #[serde(default)]
    pub kernel: u32,
    #[serde(default)]
    pub stride: u32,
    #[serde(default)]
    pub padding: u32,
    #[serde(default)]
    pub dilation: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub init: ProjectionInit,
}

fn one() -> usize {
    1
}

impl TransformSpec {
    pub fn maxpool(kernel: u32) -> Self {
        Self {
            kind: TransformKind::Maxpool,
            in_channels: 1,
            out_channels: 1,
            kernel,
            stride: kernel,
            padding: 0,
            dilation: 1,
            seed: 0,
            init: ProjectionInit::Symmetric,
        }
    }

    pub fn project(in_channels: usize, out_channels: usize, seed: u64, init: ProjectionInit) -> Self {
        Self {
            kind: TransformKind::ChannelProject,
            in_channels,
            out_channels,
            kernel: 1,
            stride: 1,
            padding: 0,
            dilation: 1,
            seed,
            init,
        }
    }

    /// Transposed-convolution hyperparameters of the learned upsampler
    /// (kernel 3, stride 1, padding 2, dilation 2). Recorded for reference only;
    /// the reference semantics is the 2x mass-preserving split.
    pub fn upsample(channels: usize) -> Self {
        Self {
            kind: TransformKind::SpatialUpsample,
            in_channels: channels,
            out_channels: channels,
            kernel: 3,
            stride: 1,
            padding: 2,
            dilation: 2,
            seed: 0,
            init: ProjectionInit::Symmetric,
        }
    }
}

/// A transform applied to a sparse tensor.
pub trait FeatureTransform: Send + Sync {
    fn spec(&self) -> &TransformSpec;
    fn apply(&self, t: &SparseTensor) -> Result<SparseTensor, TransformError>;
}

/// Builds the reference implementation of a spec.
pub fn build(spec: &TransformSpec) -> Result<Box<dyn FeatureTransform>, TransformError> {
    Ok(match spec.kind {
        TransformKind::Maxpool => {
            if spec.kernel == 0 {
                return Err(TransformError::ZeroKernel);
            }
            Box::new(MaxPool { spec: spec.clone() })
        }
        TransformKind::ChannelProject | TransformKind::CascadeStage => {
            Box::new(ChannelProjection::new(spec.clone())?)
        }
        TransformKind::SpatialUpsample => Box::new(SpatialUpsample { spec: spec.clone() }),
    })
}

pub struct MaxPool {
    spec: TransformSpec,
}

impl FeatureTransform for MaxPool {
    fn spec(&self) -> &TransformSpec {
        &self.spec
    }

    fn apply(&self, t: &SparseTensor) -> Result<SparseTensor, TransformError> {
        sparse_maxpool(t, self.spec.kernel)
    }
}

pub struct SpatialUpsample {
    spec: TransformSpec,
}

impl FeatureTransform for SpatialUpsample {
    fn spec(&self) -> &TransformSpec {
        &self.spec
    }

    fn apply(&self, t: &SparseTensor) -> Result<SparseTensor, TransformError> {
        spatial_upsample_ref(t)
    }
}

/// Seeded per-point affine map `W f + b`.
pub struct ChannelProjection {
    spec: TransformSpec,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl ChannelProjection {
    pub fn new(spec: TransformSpec) -> Result<Self, TransformError> {
        if spec.out_channels == 0 || spec.in_channels == 0 {
            return Err(TransformError::ZeroChannels);
        }
        let (weights, bias) =
            projection_weights(spec.in_channels, spec.out_channels, spec.seed, spec.init);
        Ok(Self {
            spec,
            weights,
            bias,
        })
    }

    /// Row-major `out × in` weight matrix.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }
}

impl FeatureTransform for ChannelProjection {
    fn spec(&self) -> &TransformSpec {
        &self.spec
    }

    fn apply(&self, t: &SparseTensor) -> Result<SparseTensor, TransformError> {
        let (cin, cout) = (self.spec.in_channels, self.spec.out_channels);
        if t.channels() != cin {
            return Err(TransformError::ChannelMismatch {
                expected: cin,
                got: t.channels(),
            });
        }
        let mut feats = Vec::with_capacity(t.len() * cout);
        for i in 0..t.len() {
            let row = t.row(i);
            for o in 0..cout {
                let w = &self.weights[o * cin..(o + 1) * cin];
                let acc = w.iter().zip(row).fold(self.bias[o], |s, (a, b)| s + a * b);
                feats.push(acc);
            }
        }
        Ok(SparseTensor::from_parts_unchecked(
            t.stride(),
            cout,
            t.coords().to_vec(),
            feats,
        ))
    }
}

/// Weights and bias for a projection. Equal widths with [`IDENTITY_SEED`]
/// give `W = I`, `b = 0`.
pub fn projection_weights(
    cin: usize,
    cout: usize,
    seed: u64,
    init: ProjectionInit,
) -> (Vec<f64>, Vec<f64>) {
    if cin == cout && seed == IDENTITY_SEED {
        let mut w = vec![0.0; cin * cout];
        for i in 0..cin {
            w[i * cin + i] = 1.0;
        }
        return (w, vec![0.0; cout]);
    }
    let mut rng = seed::rng(seed);
    let (lo, hi, blo, bhi) = match init {
        ProjectionInit::Symmetric => {
            let s = 1.0 / (cin as f64).sqrt();
            (-s, s, -s, s)
        }
        ProjectionInit::NonNegative => (0.0, 2.0 / cin as f64, 0.0, 1.0 / cin as f64),
    };
    let w = (0..cin * cout).map(|_| rng.gen_range(lo..=hi)).collect();
    let b = (0..cout).map(|_| rng.gen_range(blo..=bhi)).collect();
    (w, b)
}

/// Per-cell channel-wise maximum over a `k`-strided grid.
pub fn sparse_maxpool(t: &SparseTensor, k: u32) -> Result<SparseTensor, TransformError> {
    pool(t, k, |acc, row| {
        for (a, v) in acc.iter_mut().zip(row) {
            *a = a.max(*v);
        }
    }, |_, _| {})
}

/// Per-cell channel-wise mean over a `k`-strided grid.
pub fn sparse_meanpool(t: &SparseTensor, k: u32) -> Result<SparseTensor, TransformError> {
    pool(
        t,
        k,
        |acc, row| {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += *v;
            }
        },
        |acc, n| {
            for a in acc.iter_mut() {
                *a /= n as f64;
            }
        },
    )
}

/// Shared pooling driver. Rows are visited in coordinate order so results do
/// not depend on input row order; output rows are sorted by coordinate.
fn pool<A, F>(t: &SparseTensor, k: u32, mut accumulate: A, finish: F) -> Result<SparseTensor, TransformError>
where
    A: FnMut(&mut [f64], &[f64]),
    F: Fn(&mut [f64], usize),
{
    if k == 0 {
        return Err(TransformError::ZeroKernel);
    }
    let c = t.channels();
    let mut order: Vec<usize> = (0..t.len()).collect();
    order.sort_by_key(|&i| t.coords()[i]);
    let mut cells: BTreeMap<Coord, (Vec<f64>, usize)> = BTreeMap::new();
    for i in order {
        let key = floor_div(t.coords()[i], k as i32);
        let row = t.row(i);
        match cells.get_mut(&key) {
            Some((acc, n)) => {
                accumulate(acc, row);
                *n += 1;
            }
            None => {
                cells.insert(key, (row.to_vec(), 1));
            }
        }
    }
    let mut coords = Vec::with_capacity(cells.len());
    let mut feats = Vec::with_capacity(cells.len() * c);
    for (key, (mut acc, n)) in cells {
        finish(&mut acc, n);
        coords.push(key);
        feats.extend_from_slice(&acc);
    }
    Ok(SparseTensor::from_parts_unchecked(
        t.stride() * k,
        c,
        coords,
        feats,
    ))
}

pub fn channel_project(
    t: &SparseTensor,
    out_channels: usize,
    seed: u64,
) -> Result<SparseTensor, TransformError> {
    channel_project_with(t, out_channels, seed, ProjectionInit::Symmetric)
}

pub fn channel_project_with(
    t: &SparseTensor,
    out_channels: usize,
    seed: u64,
    init: ProjectionInit,
) -> Result<SparseTensor, TransformError> {
    ChannelProjection::new(TransformSpec::project(t.channels(), out_channels, seed, init))?
        .apply(t)
}

/// Halves the stride: every point splits into its 2×2×2 children, each
/// carrying one eighth of the parent's features.
pub fn spatial_upsample_ref(t: &SparseTensor) -> Result<SparseTensor, TransformError> {
    if !t.stride().is_multiple_of(2) {
        return Err(TransformError::OddStride(t.stride()));
    }
    let c = t.channels();
    let mut coords = Vec::with_capacity(t.len() * 8);
    let mut feats = Vec::with_capacity(t.len() * 8 * c);
    for (i, p) in t.coords().iter().enumerate() {
        let row: Vec<f64> = t.row(i).iter().map(|v| v / 8.0).collect();
        for dx in 0..2 {
            for dy in 0..2 {
                for dz in 0..2 {
                    coords.push([2 * p[0] + dx, 2 * p[1] + dy, 2 * p[2] + dz]);
                    feats.extend_from_slice(&row);
                }
            }
        }
    }
    // Children of distinct parents never collide.
    Ok(SparseTensor::from_parts_unchecked(t.stride() / 2, c, coords, feats))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CascadeConfig {
    pub seed: u64,
    #[serde(default)]
    pub init: ProjectionInit,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            seed: 0x5EED,
            init: ProjectionInit::NonNegative,
        }
    }
}

/// Reference four-stage extractor at strides 1/2/4/8 with widths
/// 16/32/64/64. Returns the stride-4 and stride-8 outputs.
pub fn extract_cascade_ref(
    scene: &VoxelScene,
    cfg: &CascadeConfig,
) -> Result<(SparseTensor, SparseTensor), TransformError> {
    let feats = scene
        .attrs()
        .iter()
        .flat_map(|a| a.iter().map(|&v| v as f64))
        .collect();
    let mut t = SparseTensor::new(1, ATTRS, scene.coords().to_vec(), feats)?;
    let mut outputs = Vec::with_capacity(4);
    for (stage, &width) in CASCADE_WIDTHS.iter().enumerate() {
        let k = if stage == 0 { 1 } else { 2 };
        let pooled = sparse_meanpool(&t, k)?;
        let seed = seed::derive(cfg.seed, stage as u64 + 1);
        t = channel_project_with(&pooled, width, seed, cfg.init)?;
        outputs.push(t.clone());
    }
    let f4 = outputs.pop().unwrap();
    let f3 = outputs.pop().unwrap();
    Ok((f3, f4))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn random_tensor(seed: u64, n: usize, c: usize, extent: i32) -> SparseTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = HashSet::new();
        while set.len() < n {
            set.insert([
                rng.gen_range(0..extent),
                rng.gen_range(0..extent),
                rng.gen_range(0..extent),
            ]);
        }
        let mut coords: Vec<Coord> = set.into_iter().collect();
        coords.sort();
        let feats = (0..n * c).map(|_| rng.gen_range(-3.0..3.0)).collect();
        SparseTensor::new(1, c, coords, feats).unwrap()
    }

    #[test]
    fn maxpool_singleton() {
        let t = SparseTensor::new(1, 1, vec![[5, 3, 1]], vec![7.0]).unwrap();
        let p = sparse_maxpool(&t, 2).unwrap();
        assert_eq!(p.coords(), &[[2, 1, 0]]);
        assert_eq!(p.feats(), &[7.0]);
        assert_eq!(p.stride(), 2);
    }

    #[test]
    fn maxpool_full_cube() {
        let mut coords = Vec::new();
        for x in 0..2 {
            for y in 0..2 {
                for z in 0..2 {
                    coords.push([x, y, z]);
                }
            }
        }
        let feats = (1..=8).map(f64::from).collect();
        let t = SparseTensor::new(1, 1, coords, feats).unwrap();
        let p = sparse_maxpool(&t, 2).unwrap();
        assert_eq!(p.coords(), &[[0, 0, 0]]);
        assert_eq!(p.feats(), &[8.0]);
    }

    #[test]
    fn maxpool_matches_brute_force() {
        for seed in 0..20 {
            let t = random_tensor(seed, 150, 3, 12);
            for k in [1, 2, 3] {
                let p = sparse_maxpool(&t, k).unwrap();
                let cells: HashSet<Coord> =
                    t.coords().iter().map(|c| floor_div(*c, k as i32)).collect();
                assert_eq!(p.len(), cells.len());
                for (j, cell) in p.coords().iter().enumerate() {
                    for ch in 0..3 {
                        let want = (0..t.len())
                            .filter(|&i| floor_div(t.coords()[i], k as i32) == *cell)
                            .map(|i| t.row(i)[ch])
                            .fold(f64::NEG_INFINITY, f64::max);
                        assert_eq!(p.row(j)[ch], want);
                    }
                }
                if k == 1 {
                    assert_eq!(p.coord_set(), t.coord_set());
                }
            }
        }
    }

    #[test]
    fn identity_seed_is_identity() {
        let t = random_tensor(1, 30, 4, 10);
        let p = channel_project(&t, 4, IDENTITY_SEED).unwrap();
        assert_eq!(p, t);
    }

    #[test]
    fn projection_matches_dense_matmul() {
        let t = random_tensor(2, 40, 5, 10);
        let p = channel_project(&t, 3, 7).unwrap();
        let (w, b) = projection_weights(5, 3, 7, ProjectionInit::Symmetric);
        let bound = 1.0 / 5f64.sqrt();
        assert!(w.iter().chain(&b).all(|v| v.abs() <= bound));
        for i in 0..t.len() {
            for o in 0..3 {
                let mut acc = b[o];
                for k in 0..5 {
                    acc += w[o * 5 + k] * t.row(i)[k];
                }
                assert!((p.row(i)[o] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tffc_channel_path() {
        let t = random_tensor(3, 10, 64, 10);
        let c5 = channel_project(&t, 16, 5).unwrap();
        let c6 = channel_project(&c5, 4, 6).unwrap();
        assert_eq!((c5.channels(), c6.channels()), (16, 4));
        assert_eq!(c6.coords(), t.coords());
    }

    #[test]
    fn projection_is_affine() {
        let a = random_tensor(4, 20, 6, 10);
        let feats_b: Vec<f64> = a.feats().iter().map(|v| v.sin() * 2.0).collect();
        let b = SparseTensor::new(1, 6, a.coords().to_vec(), feats_b).unwrap();
        let (alpha, beta) = (0.7, -1.3);
        let mix: Vec<f64> = a
            .feats()
            .iter()
            .zip(b.feats())
            .map(|(x, y)| alpha * x + beta * y)
            .collect();
        let m = SparseTensor::new(1, 6, a.coords().to_vec(), mix).unwrap();
        let proj = ChannelProjection::new(TransformSpec::project(6, 5, 99, ProjectionInit::Symmetric)).unwrap();
        let (pa, pb, pm) = (
            proj.apply(&a).unwrap(),
            proj.apply(&b).unwrap(),
            proj.apply(&m).unwrap(),
        );
        for i in 0..a.len() {
            for o in 0..5 {
                let want = alpha * pa.row(i)[o] + beta * pb.row(i)[o]
                    - (alpha + beta - 1.0) * proj.bias()[o];
                assert!((pm.row(i)[o] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn nonnegative_init_is_monotone() {
        let (w, b) = projection_weights(8, 16, 5, ProjectionInit::NonNegative);
        assert!(w.iter().all(|&v| (0.0..=0.25).contains(&v)));
        assert!(b.iter().all(|&v| (0.0..=0.125).contains(&v)));
    }

    #[test]
    fn upsample_single_point() {
        let t = SparseTensor::new(2, 1, vec![[1, 1, 1]], vec![8.0]).unwrap();
        let u = spatial_upsample_ref(&t).unwrap();
        assert_eq!(u.stride(), 1);
        assert_eq!(u.len(), 8);
        assert!(u.feats().iter().all(|&v| v == 1.0));
        assert!(u.coords().iter().all(|c| c.iter().all(|&v| (2..=3).contains(&v))));
    }

    #[test]
    fn upsample_adjacent_points_and_containment() {
        let t = SparseTensor::new(4, 1, vec![[0, 0, 0], [1, 0, 0]], vec![1.0, 2.0]).unwrap();
        let u = spatial_upsample_ref(&t).unwrap();
        let mut union = HashSet::new();
        for c in t.coords() {
            for o in 0..8 {
                union.insert([2 * c[0] + (o >> 2), 2 * c[1] + ((o >> 1) & 1), 2 * c[2] + (o & 1)]);
            }
        }
        assert_eq!(u.coord_set(), union);
        let rescaled = crate::voxel::rescale_coords(&t, 2).unwrap();
        assert!(rescaled.coord_set().is_subset(&u.coord_set()));
    }

    #[test]
    fn upsample_conserves_mass() {
        let t = random_tensor(6, 50, 2, 16);
        let t = SparseTensor::new(8, 2, t.coords().to_vec(), t.feats().to_vec()).unwrap();
        let u = spatial_upsample_ref(&t).unwrap();
        let back = pool(&u, 2, |acc, row| {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }, |_, _| {})
        .unwrap();
        let back = back.reorder(t.coords()).unwrap();
        for (x, y) in back.feats().iter().zip(t.feats()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(matches!(
            spatial_upsample_ref(&SparseTensor::empty(3, 1)),
            Err(TransformError::OddStride(3))
        ));
    }

    fn scene(n: usize, seed: u64) -> VoxelScene {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = HashSet::new();
        while set.len() < n {
            set.insert([rng.gen_range(0..64), rng.gen_range(0..64), rng.gen_range(0..16)]);
        }
        let coords: Vec<Coord> = set.into_iter().collect();
        let attrs = coords.iter().map(|_| [0.0f32; 8].map(|_| rng.gen::<f32>())).collect();
        VoxelScene::new([0.0; 3], 0.1, coords, attrs).unwrap()
    }

    #[test]
    fn cascade_shapes() {
        let s = scene(500, 1);
        let (f3, f4) = extract_cascade_ref(&s, &CascadeConfig::default()).unwrap();
        assert_eq!((f3.stride(), f3.channels()), (4, 64));
        assert_eq!((f4.stride(), f4.channels()), (8, 64));
        let cells: HashSet<Coord> = s.coords().iter().map(|c| floor_div(*c, 8)).collect();
        assert_eq!(f4.len(), cells.len());
    }

    #[test]
    fn cascade_single_voxel() {
        let s = VoxelScene::new([0.0; 3], 0.1, vec![[17, 9, 30]], vec![[1.0; 8]]).unwrap();
        let (_, f4) = extract_cascade_ref(&s, &CascadeConfig::default()).unwrap();
        assert_eq!(f4.coords(), &[[2, 1, 3]]);
    }

    #[test]
    fn cascade_is_permutation_invariant() {
        let s = scene(300, 2);
        let mut coords = s.coords().to_vec();
        let mut attrs = s.attrs().to_vec();
        coords.reverse();
        attrs.reverse();
        let r = VoxelScene::new([0.0; 3], 0.1, coords, attrs).unwrap();
        let cfg = CascadeConfig {
            seed: 77,
            init: ProjectionInit::Symmetric,
        };
        assert_eq!(
            extract_cascade_ref(&s, &cfg).unwrap(),
            extract_cascade_ref(&r, &cfg).unwrap()
        );
    }
}
