use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;

use super::ReconstructError;
use crate::seed;
use crate::voxel::{dist2, GridIndex};

pub const PATCH_SIZE: usize = 30;
pub const UP_RATIO: usize = 4;

/// Splits an object into `floor(n / patch_size)` patches of exactly
/// `patch_size` points. Patch centres are picked by farthest-point sampling
/// from a seeded start; patches then take turns claiming their nearest
/// unclaimed point. Leftover points are dropped.
pub fn patch_partition(points: &[[f64; 3]], patch_size: usize, seed: u64) -> Vec<Vec<[f64; 3]>> {
    let n = points.len();
    if patch_size == 0 || n < patch_size {
        return Vec::new();
    }
    let k = n / patch_size;
    let mut centres = Vec::with_capacity(k);
    centres.push(seed::rng(seed).gen_range(0..n));
    let mut near: Vec<f64> = points.iter().map(|p| dist2(p, &points[centres[0]])).collect();
    while centres.len() < k {
        let mut best = 0;
        for i in 1..n {
            if near[i] > near[best] {
                best = i;
            }
        }
        centres.push(best);
        for (i, p) in points.iter().enumerate() {
            near[i] = near[i].min(dist2(p, &points[best]));
        }
    }

    let queues: Vec<Vec<usize>> = centres
        .iter()
        .map(|&c| {
            let mut q: Vec<usize> = (0..n).collect();
            let d: Vec<f64> = points.iter().map(|p| dist2(p, &points[c])).collect();
            q.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
            q
        })
        .collect();
    let mut cursor = vec![0usize; k];
    let mut taken = vec![false; n];
    let mut patches = vec![Vec::with_capacity(patch_size); k];
    for _ in 0..patch_size {
        for j in 0..k {
            while taken[queues[j][cursor[j]]] {
                cursor[j] += 1;
            }
            let i = queues[j][cursor[j]];
            taken[i] = true;
            patches[j].push(points[i]);
        }
    }
    patches
}

/// Patch-level point upsampler.
pub trait Densifier {
    fn up_ratio(&self) -> usize;
    fn densify(&self, patch: &[[f64; 3]]) -> Vec<[f64; 3]>;
}

/// Geometric stand-in for a learned upsampler.
#[derive(Debug, Clone, Copy)]
pub struct RefDensifier {
    pub seed: u64,
}

impl Densifier for RefDensifier {
    fn up_ratio(&self) -> usize {
        UP_RATIO
    }

    fn densify(&self, patch: &[[f64; 3]]) -> Vec<[f64; 3]> {
        densify_ref(patch, self.seed)
    }
}

/// Each point followed by copies at 1/4, 1/2 and 3/4 of the way to its
/// nearest neighbour. The seed only orders equidistant neighbours.
pub fn densify_ref(patch: &[[f64; 3]], seed: u64) -> Vec<[f64; 3]> {
    let n = patch.len();
    let mut visit: Vec<usize> = (0..n).collect();
    visit.shuffle(&mut seed::rng(seed));
    let mut out = Vec::with_capacity(UP_RATIO * n);
    for (i, p) in patch.iter().enumerate() {
        let mut nn: Option<(usize, f64)> = None;
        for &j in &visit {
            if j == i {
                continue;
            }
            let d = dist2(p, &patch[j]);
            if nn.is_none_or(|(_, b)| d < b) {
                nn = Some((j, d));
            }
        }
        let q = nn.map_or(*p, |(j, _)| patch[j]);
        out.push(*p);
        for f in [0.25, 0.5, 0.75] {
            out.push([
                p[0] + f * (q[0] - p[0]),
                p[1] + f * (q[1] - p[1]),
                p[2] + f * (q[2] - p[2]),
            ]);
        }
    }
    out
}

/// Partitions an object into patches and densifies each; leftovers beyond
/// whole patches are dropped along with objects smaller than one patch.
pub fn densify_object(
    points: &[[f64; 3]],
    patch_size: usize,
    seed: u64,
    densifier: &dyn Densifier,
) -> Vec<[f64; 3]> {
    patch_partition(points, patch_size, seed)
        .iter()
        .flat_map(|p| densifier.densify(p))
        .collect()
}

/// Symmetric mean of squared nearest-neighbour distances.
pub fn chamfer(x: &[[f64; 3]], y: &[[f64; 3]]) -> Result<f64, ReconstructError> {
    if x.is_empty() || y.is_empty() {
        return Err(ReconstructError::EmptySet);
    }
    let one_way = |a: &[[f64; 3]], b: &[[f64; 3]]| -> f64 {
        let idx = GridIndex::from_points(b, None);
        let s: f64 = a
            .iter()
            .map(|p| {
                let (j, _) = idx.nearest(*p).expect("non-empty index");
                dist2(p, &b[j])
            })
            .sum();
        s / a.len() as f64
    };
    Ok(one_way(x, y) + one_way(y, x))
}

/// ASCII PLY with float vertex coordinates.
pub fn write_ply<W: Write>(mut w: W, points: &[[f64; 3]]) -> std::io::Result<()> {
    writeln!(w, "ply\nformat ascii 1.0")?;
    writeln!(w, "element vertex {}", points.len())?;
    writeln!(w, "property float x\nproperty float y\nproperty float z\nend_header")?;
    for p in points {
        writeln!(w, "{} {} {}", p[0], p[1], p[2])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, seed: u64) -> Vec<[f64; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(0.0..2.0)])
            .collect()
    }

    #[test]
    fn partition_sizes() {
        assert!(patch_partition(&cloud(29, 1), PATCH_SIZE, 0).is_empty());
        let p = patch_partition(&cloud(90, 1), PATCH_SIZE, 0);
        assert_eq!(p.iter().map(Vec::len).collect::<Vec<_>>(), vec![30; 3]);
        let pts = cloud(95, 2);
        let p = patch_partition(&pts, PATCH_SIZE, 0);
        assert_eq!(p.len(), 3);
        let mut used: Vec<[f64; 3]> = p.concat();
        assert_eq!(used.len(), 90);
        used.sort_by(|a, b| a.partial_cmp(b).unwrap());
        used.dedup();
        assert_eq!(used.len(), 90);
        assert_eq!(patch_partition(&pts, PATCH_SIZE, 0), p);
    }

    #[test]
    fn degenerate_patch() {
        let out = densify_ref(&[[1.0, 2.0, 3.0]; 30], 9);
        assert_eq!(out, vec![[1.0, 2.0, 3.0]; 120]);
    }

    #[test]
    fn collinear_patch_stays_on_line() {
        let patch: Vec<[f64; 3]> = (0..30).map(|i| [i as f64 * 0.7, 2.0 * i as f64 * 0.7, -1.0]).collect();
        let out = RefDensifier { seed: 3 }.densify(&patch);
        assert_eq!(out.len(), 120);
        for p in out {
            assert!((p[1] - 2.0 * p[0]).abs() < 1e-9 && p[2] == -1.0);
            assert!(p[0] >= 0.0 && p[0] <= 29.0 * 0.7 + 1e-9);
        }
    }

    #[test]
    fn chamfer_hand_values() {
        assert_eq!(chamfer(&[[0.0; 3]], &[[1.0, 0.0, 0.0]]).unwrap(), 2.0);
        let x = cloud(50, 4);
        assert_eq!(chamfer(&x, &x).unwrap(), 0.0);
        assert!(matches!(chamfer(&[], &x), Err(ReconstructError::EmptySet)));
    }

    #[test]
    fn chamfer_matches_brute_force() {
        let (x, y) = (cloud(400, 5), cloud(300, 6));
        let brute = |a: &[[f64; 3]], b: &[[f64; 3]]| {
            a.iter()
                .map(|p| b.iter().map(|q| dist2(p, q)).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
                / a.len() as f64
        };
        let want = brute(&x, &y) + brute(&y, &x);
        let got = chamfer(&x, &y).unwrap();
        assert!((got - want).abs() <= 1e-12 * want.max(1.0));
        assert_eq!(got, chamfer(&y, &x).unwrap());
    }

    #[test]
    fn ply_header() {
        let mut buf = Vec::new();
        write_ply(&mut buf, &[[0.5, 1.0, 2.0]]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("ply\nformat ascii 1.0\nelement vertex 1\n"));
        assert!(s.ends_with("end_header\n0.5 1 2\n"));
    }
}
