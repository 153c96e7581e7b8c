use std::collections::HashMap;

use super::{Coord, VoxelError};

type Cell = [i64; 3];

/// Uniform hash grid over a point set supporting exact nearest-neighbour and
/// radius queries. Integer coordinate sets use a cell size of one grid unit.
#[derive(Debug, Clone)]
pub struct GridIndex {
    cell: f64,
    points: Vec<[f64; 3]>,
    cells: HashMap<Cell, Vec<u32>>,
    lo: Cell,
    hi: Cell,
}

impl GridIndex {
    pub fn from_coords(coords: &[Coord]) -> Self {
        let pts: Vec<[f64; 3]> = coords
            .iter()
            .map(|c| [c[0] as f64, c[1] as f64, c[2] as f64])
            .collect();
        Self::build(pts, 1.0)
    }

    /// Index over real-valued points. `cell` must be positive; when `None`
    /// a size is chosen from the bounding box so cells hold about one point.
    pub fn from_points(points: &[[f64; 3]], cell: Option<f64>) -> Self {
        let cell = match cell {
            Some(c) if c > 0.0 && c.is_finite() => c,
            _ => auto_cell_size(points),
        };
        Self::build(points.to_vec(), cell)
    }

    fn build(points: Vec<[f64; 3]>, cell: f64) -> Self {
        let mut cells: HashMap<Cell, Vec<u32>> = HashMap::with_capacity(points.len());
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for (i, p) in points.iter().enumerate() {
            let k = cell_of(p, cell);
            for a in 0..3 {
                lo[a] = lo[a].min(k[a]);
                hi[a] = hi[a].max(k[a]);
            }
            cells.entry(k).or_default().push(i as u32);
        }
        Self {
            cell,
            points,
            cells,
            lo,
            hi,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    /// Exact membership test for an integer coordinate.
    pub fn contains(&self, c: Coord) -> bool {
        let p = [c[0] as f64, c[1] as f64, c[2] as f64];
        self.cells
            .get(&cell_of(&p, self.cell))
            .is_some_and(|ids| ids.iter().any(|&i| self.points[i as usize] == p))
    }

    pub fn min_distance(&self, q: [f64; 3]) -> Result<f64, VoxelError> {
        self.nearest(q).map(|(_, d)| d)
    }

    /// Index and distance of the closest indexed point. Ties resolve to the
    /// lowest index.
    pub fn nearest(&self, q: [f64; 3]) -> Result<(usize, f64), VoxelError> {
        if self.points.is_empty() {
            return Err(VoxelError::EmptySet);
        }
        let c0 = cell_of(&q, self.cell);
        let max_ring = (0..3)
            .map(|a| (c0[a] - self.lo[a]).abs().max((self.hi[a] - c0[a]).abs()))
            .max()
            .unwrap_or(0);
        let budget = 8 * self.points.len() + 64;
        let mut visited = 0usize;
        let mut best: Option<(usize, f64)> = None;

        for r in 0..=max_ring {
            // Anything in ring r lies at least (r - 1) cells away.
            if let Some((_, d2)) = best {
                let bound = (r - 1).max(0) as f64 * self.cell;
                if d2.sqrt() <= bound {
                    break;
                }
            }
            if visited > budget {
                return Ok(self.scan(q));
            }
            visited += self.visit_shell(c0, r, |i| {
                let d2 = dist2(&self.points[i], &q);
                match best {
                    Some((bi, bd)) if d2 > bd || (d2 == bd && i > bi) => {}
                    _ => best = Some((i, d2)),
                }
            });
        }
        let (i, d2) = best.expect("non-empty index yields a nearest point");
        Ok((i, d2.sqrt()))
    }

    /// True when some indexed point lies within `radius` of `q`.
    pub fn any_within(&self, q: [f64; 3], radius: f64) -> bool {
        if self.points.is_empty() || radius < 0.0 {
            return false;
        }
        let r2 = radius * radius;
        let lo = cell_of(&[q[0] - radius, q[1] - radius, q[2] - radius], self.cell);
        let hi = cell_of(&[q[0] + radius, q[1] + radius, q[2] + radius], self.cell);
        let span: i128 = (0..3).map(|a| (hi[a] - lo[a] + 1) as i128).product();
        if span > 4 * self.points.len() as i128 + 64 {
            return self.points.iter().any(|p| dist2(p, &q) <= r2);
        }
        for x in lo[0].max(self.lo[0])..=hi[0].min(self.hi[0]) {
            for y in lo[1].max(self.lo[1])..=hi[1].min(self.hi[1]) {
                for z in lo[2].max(self.lo[2])..=hi[2].min(self.hi[2]) {
                    if let Some(ids) = self.cells.get(&[x, y, z]) {
                        if ids.iter().any(|&i| dist2(&self.points[i as usize], &q) <= r2) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }

    fn scan(&self, q: [f64; 3]) -> (usize, f64) {
        let mut best = (0usize, f64::INFINITY);
        for (i, p) in self.points.iter().enumerate() {
            let d2 = dist2(p, &q);
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        (best.0, best.1.sqrt())
    }

    /// Calls `f` for every point in cells at Chebyshev distance exactly `r`
    /// from `c0`, clipped to the occupied bounding box. Returns cells visited.
    fn visit_shell<F: FnMut(usize)>(&self, c0: Cell, r: i64, mut f: F) -> usize {
        let mut n = 0;
        let mut emit = |k: Cell, n: &mut usize| {
            *n += 1;
            if let Some(ids) = self.cells.get(&k) {
                for &i in ids {
                    f(i as usize);
                }
            }
        };
        let xr = (c0[0] - r).max(self.lo[0])..=(c0[0] + r).min(self.hi[0]);
        for x in xr {
            let yr = (c0[1] - r).max(self.lo[1])..=(c0[1] + r).min(self.hi[1]);
            for y in yr {
                if (x - c0[0]).abs() == r || (y - c0[1]).abs() == r {
                    for z in (c0[2] - r).max(self.lo[2])..=(c0[2] + r).min(self.hi[2]) {
                        emit([x, y, z], &mut n);
                    }
                } else {
                    // r > 0 here: r == 0 always takes the branch above.
                    for z in [c0[2] - r, c0[2] + r] {
                        if z >= self.lo[2] && z <= self.hi[2] {
                            emit([x, y, z], &mut n);
                        }
                    }
                }
            }
        }
        n
    }
}

#[inline]
fn cell_of(p: &[f64; 3], cell: f64) -> Cell {
    [
        (p[0] / cell).floor() as i64,
        (p[1] / cell).floor() as i64,
        (p[2] / cell).floor() as i64,
    ]
}

#[inline]
pub(crate) fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

fn auto_cell_size(points: &[[f64; 3]]) -> f64 {
    if points.len() < 2 {
        return 1.0;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0f64, f64::max);
    if extent <= 0.0 || !extent.is_finite() {
        return 1.0;
    }
    (extent / (points.len() as f64).cbrt()).max(extent * 1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(coords: &[Coord], q: [f64; 3]) -> f64 {
        coords
            .iter()
            .map(|c| dist2(&[c[0] as f64, c[1] as f64, c[2] as f64], &q))
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }

    #[test]
    fn member_is_zero() {
        let idx = GridIndex::from_coords(&[[1, 2, 3], [7, 7, 7]]);
        assert_eq!(idx.min_distance([7.0, 7.0, 7.0]).unwrap(), 0.0);
        assert!(idx.contains([1, 2, 3]));
        assert!(!idx.contains([1, 2, 4]));
    }

    #[test]
    fn three_four_five() {
        let idx = GridIndex::from_coords(&[[0, 0, 0]]);
        assert_eq!(idx.min_distance([3.0, 4.0, 0.0]).unwrap(), 5.0);
    }

    #[test]
    fn empty_index_errors() {
        let idx = GridIndex::from_coords(&[]);
        assert!(matches!(idx.min_distance([0.0; 3]), Err(VoxelError::EmptySet)));
        assert!(!idx.any_within([0.0; 3], 10.0));
    }

    #[test]
    fn matches_exhaustive_scan_on_200_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let coords: Vec<Coord> = (0..200)
            .map(|_| {
                [
                    rng.gen_range(0..64),
                    rng.gen_range(0..64),
                    rng.gen_range(0..16),
                ]
            })
            .collect();
        let idx = GridIndex::from_coords(&coords);
        for _ in 0..500 {
            let q = [
                rng.gen_range(-20.0..90.0),
                rng.gen_range(-20.0..90.0),
                rng.gen_range(-10.0..30.0),
            ];
            let got = idx.min_distance(q).unwrap();
            assert!((got - brute(&coords, q)).abs() < 1e-12, "q={q:?}");
            for radius in [0.0, 0.5, 2.0, 5.0] {
                assert_eq!(idx.any_within(q, radius), brute(&coords, q) <= radius);
            }
        }
    }

    #[test]
    fn real_points_with_auto_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<[f64; 3]> = (0..300)
            .map(|_| [rng.gen(), rng.gen::<f64>() * 5.0, rng.gen::<f64>() * 0.1])
            .collect();
        let idx = GridIndex::from_points(&pts, None);
        for _ in 0..200 {
            let q = [rng.gen::<f64>() * 2.0, rng.gen::<f64>() * 6.0, rng.gen()];
            let expect = pts
                .iter()
                .map(|p| dist2(p, &q))
                .fold(f64::INFINITY, f64::min)
                .sqrt();
            assert!((idx.min_distance(q).unwrap() - expect).abs() < 1e-12);
        }
    }
}
