//! Breadth-first octree occupancy coding of integer coordinate sets.
//!
//! Payload: `n: u32` and, when `n > 0`, `depth: u8`, `origin: 3 × i32`, then
//! the range-coded occupancy bins. Every node's 8 child bits are coded in
//! child-index order `(x << 2) | (y << 1) | z`, each under a context keyed by
//! `(min(level, 7), parent occupancy byte, child index)`. A node always has at
//! least one occupied child, so the eighth bin is skipped when the first seven
//! are empty. Leaves are emitted in breadth-first order, which is Morton order
//! with x as the most significant axis.

use std::collections::HashSet;

use super::coder::{ContextSet, Decoder, Encoder};
use super::CodecError;
use crate::voxel::Coord;

/// Maximum supported octree depth; bounding-box sides must not exceed 2^21.
pub const MAX_DEPTH: u32 = 21;
const DEPTH_BUCKETS: usize = 8;
const HEADER_BYTES: usize = 4 + 1 + 12;

/// Inclusive axis-aligned box in grid units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bbox {
    pub min: Coord,
    pub max: Coord,
}

impl Bbox {
    pub fn of(coords: &[Coord]) -> Option<Bbox> {
        let first = *coords.first()?;
        let (mut min, mut max) = (first, first);
        for c in coords {
            for a in 0..3 {
                min[a] = min[a].min(c[a]);
                max[a] = max[a].max(c[a]);
            }
        }
        Some(Bbox { min, max })
    }

    pub fn contains(&self, c: &Coord) -> bool {
        (0..3).all(|a| c[a] >= self.min[a] && c[a] <= self.max[a])
    }

    pub fn side(&self) -> u64 {
        (0..3)
            .map(|a| (self.max[a] as i64 - self.min[a] as i64 + 1).max(0) as u64)
            .max()
            .unwrap_or(0)
    }
}

/// Pluggable geometry backend. Implementations must be lossless and report
/// the order in which the decoder will emit the coordinates.
pub trait GeometryCoder: Send + Sync {
    fn encode(&self, coords: &[Coord], bbox: Option<Bbox>) -> Result<EncodedGeometry, CodecError>;
    fn decode(&self, bytes: &[u8]) -> Result<Vec<Coord>, CodecError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedGeometry {
    pub bytes: Vec<u8>,
    /// Coordinates in decoder emission order.
    pub order: Vec<Coord>,
}

/// The handcrafted contextual octree coder.
#[derive(Debug, Clone, Copy, Default)]
pub struct OctreeCoder;

impl GeometryCoder for OctreeCoder {
    fn encode(&self, coords: &[Coord], bbox: Option<Bbox>) -> Result<EncodedGeometry, CodecError> {
        encode_geometry(coords, bbox)
    }

    fn decode(&self, bytes: &[u8]) -> Result<Vec<Coord>, CodecError> {
        decode_geometry(bytes)
    }
}

fn depth_for(side: u64) -> u32 {
    if side <= 1 {
        0
    } else {
        64 - (side - 1).leading_zeros()
    }
}

/// Interleaves the low 21 bits of each axis, x most significant.
pub fn morton(rel: [u32; 3]) -> u64 {
    fn spread(v: u32) -> u64 {
        let mut x = (v as u64) & 0x1F_FFFF;
        x = (x | (x << 32)) & 0x1F_0000_0000_FFFF;
        x = (x | (x << 16)) & 0x1F_0000_FF00_00FF;
        x = (x | (x << 8)) & 0x100F_00F0_0F00_F00F;
        x = (x | (x << 4)) & 0x10C3_0C30_C30C_30C3;
        x = (x | (x << 2)) & 0x1249_2492_4924_9249;
        x
    }
    (spread(rel[0]) << 2) | (spread(rel[1]) << 1) | spread(rel[2])
}

/// Sorts coordinates into the order the octree decoder emits them.
pub fn canonical_order(coords: &[Coord], origin: Coord) -> Vec<Coord> {
    let mut keyed: Vec<(u64, Coord)> = coords
        .iter()
        .map(|c| (morton(relative(c, &origin)), *c))
        .collect();
    keyed.sort_unstable_by_key(|k| k.0);
    keyed.into_iter().map(|k| k.1).collect()
}

fn relative(c: &Coord, origin: &Coord) -> [u32; 3] {
    [
        (c[0] as i64 - origin[0] as i64) as u32,
        (c[1] as i64 - origin[1] as i64) as u32,
        (c[2] as i64 - origin[2] as i64) as u32,
    ]
}

#[inline]
fn ctx_index(level: u32, parent_occ: u8, child: usize) -> usize {
    ((level as usize).min(DEPTH_BUCKETS - 1) * 256 + parent_occ as usize) * 8 + child
}

pub fn encode_geometry(coords: &[Coord], bbox: Option<Bbox>) -> Result<EncodedGeometry, CodecError> {
    let n = coords.len();
    let mut bytes = Vec::with_capacity(HEADER_BYTES + n);
    bytes.extend_from_slice(&(n as u32).to_le_bytes());
    if n == 0 {
        return Ok(EncodedGeometry {
            bytes,
            order: Vec::new(),
        });
    }
    if n > u32::MAX as usize {
        return Err(CodecError::TooLarge("point count"));
    }
    let bbox = match bbox {
        Some(b) => b,
        None => Bbox::of(coords).expect("non-empty"),
    };
    if let Some(c) = coords.iter().find(|c| !bbox.contains(c)) {
        return Err(CodecError::OutOfBbox(*c));
    }
    let side = bbox.side();
    if side > 1 << MAX_DEPTH {
        return Err(CodecError::TooLarge("bounding box side exceeds 2^21"));
    }
    let depth = depth_for(side);

    let mut keyed: Vec<(u64, Coord)> = coords
        .iter()
        .map(|c| (morton(relative(c, &bbox.min)), *c))
        .collect();
    keyed.sort_unstable_by_key(|k| k.0);
    if let Some(w) = keyed.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(CodecError::DuplicateCoord(w[0].1));
    }

    bytes.push(depth as u8);
    for v in bbox.min {
        bytes.extend_from_slice(&v.to_le_bytes());
    }

    let mut ctx = ContextSet::new(DEPTH_BUCKETS * 256 * 8);
    let mut enc = Encoder::new();
    // (start, end, parent occupancy) ranges of the sorted keys, one per node.
    let mut nodes: Vec<(usize, usize, u8)> = vec![(0, n, 0)];
    for level in 0..depth {
        let shift = 3 * (depth - 1 - level);
        let mut next = Vec::with_capacity(nodes.len() * 2);
        for &(start, end, parent_occ) in &nodes {
            let mut occ = 0u8;
            let mut i = start;
            while i < end {
                let child = ((keyed[i].0 >> shift) & 7) as usize;
                let mut j = i + 1;
                while j < end && ((keyed[j].0 >> shift) & 7) as usize == child {
                    j += 1;
                }
                occ |= 1 << (7 - child);
                next.push((i, j, child as u8));
                i = j;
            }
            for child in 0..8 {
                if child == 7 && occ & 0xFE == 0 {
                    break;
                }
                let bit = occ & (1 << (7 - child)) != 0;
                enc.encode(bit, ctx.get_mut(ctx_index(level, parent_occ, child)));
            }
            // children carry this node's occupancy as their parent context
            let first_child = next.len() - (occ.count_ones() as usize);
            for c in &mut next[first_child..] {
                c.2 = occ;
            }
        }
        nodes = next;
    }
    bytes.extend_from_slice(&enc.finish());
    Ok(EncodedGeometry {
        bytes,
        order: keyed.into_iter().map(|k| k.1).collect(),
    })
}

pub fn decode_geometry(bytes: &[u8]) -> Result<Vec<Coord>, CodecError> {
    if bytes.len() < 4 {
        return Err(CodecError::Truncated { offset: bytes.len() });
    }
    let n = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    if n == 0 {
        if bytes.len() != 4 {
            return Err(CodecError::TrailingBytes {
                consumed: 4,
                len: bytes.len(),
            });
        }
        return Ok(Vec::new());
    }
    if bytes.len() < HEADER_BYTES {
        return Err(CodecError::Truncated { offset: bytes.len() });
    }
    let depth = bytes[4] as u32;
    if depth > MAX_DEPTH {
        return Err(CodecError::Corrupt {
            offset: 4,
            reason: "octree depth exceeds 21",
        });
    }
    let origin: Coord = [
        i32::from_le_bytes(bytes[5..9].try_into().unwrap()),
        i32::from_le_bytes(bytes[9..13].try_into().unwrap()),
        i32::from_le_bytes(bytes[13..17].try_into().unwrap()),
    ];
    // a depth-d tree holds at most 8^d leaves
    if depth < 11 && (n as u64) > 1u64 << (3 * depth) {
        return Err(CodecError::Corrupt {
            offset: 0,
            reason: "point count exceeds octree capacity",
        });
    }
    let payload = &bytes[HEADER_BYTES..];
    let mut dec = Decoder::new(payload).map_err(|e| e.shifted(HEADER_BYTES))?;
    let mut ctx = ContextSet::new(DEPTH_BUCKETS * 256 * 8);
    // (prefix, parent occupancy) per node at the current level
    let mut nodes: Vec<([u32; 3], u8)> = vec![([0; 3], 0)];
    for level in 0..depth {
        let mut next = Vec::with_capacity(nodes.len() * 2);
        for &(prefix, parent_occ) in &nodes {
            let mut occ = 0u8;
            for child in 0..8 {
                let bit = if child == 7 && occ == 0 {
                    true
                } else {
                    dec.decode(ctx.get_mut(ctx_index(level, parent_occ, child)))
                        .map_err(|e| e.shifted(HEADER_BYTES))?
                };
                if bit {
                    occ |= 1 << (7 - child);
                }
            }
            for child in 0..8u32 {
                if occ & (1 << (7 - child)) != 0 {
                    let p = [
                        (prefix[0] << 1) | (child >> 2),
                        (prefix[1] << 1) | ((child >> 1) & 1),
                        (prefix[2] << 1) | (child & 1),
                    ];
                    next.push((p, occ));
                }
            }
            if next.len() > n {
                return Err(CodecError::Corrupt {
                    offset: HEADER_BYTES + dec.position(),
                    reason: "more occupied nodes than declared points",
                });
            }
        }
        nodes = next;
    }
    if nodes.len() != n {
        return Err(CodecError::Corrupt {
            offset: HEADER_BYTES + dec.position(),
            reason: "leaf count differs from declared point count",
        });
    }
    dec.finish().map_err(|e| e.shifted(HEADER_BYTES))?;
    let mut out = Vec::with_capacity(n);
    for (p, _) in nodes {
        let mut c = [0i32; 3];
        for a in 0..3 {
            let v = origin[a] as i64 + p[a] as i64;
            c[a] = i32::try_from(v).map_err(|_| CodecError::Corrupt {
                offset: 5,
                reason: "decoded coordinate overflows i32",
            })?;
        }
        out.push(c);
    }
    Ok(out)
}

/// Order-insensitive comparison helper.
pub fn same_set(a: &[Coord], b: &[Coord]) -> bool {
    a.len() == b.len() && a.iter().collect::<HashSet<_>>() == b.iter().collect::<HashSet<_>>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_set_is_header_only() {
        let e = encode_geometry(&[], None).unwrap();
        assert_eq!(e.bytes, vec![0, 0, 0, 0]);
        assert!(decode_geometry(&e.bytes).unwrap().is_empty());
    }

    #[test]
    fn single_point() {
        let e = encode_geometry(&[[5, -3, 9]], None).unwrap();
        assert_eq!(decode_geometry(&e.bytes).unwrap(), vec![[5, -3, 9]]);
    }

    #[test]
    fn full_cube_is_smaller_than_raw() {
        let mut cube = Vec::new();
        for x in 0..2 {
            for y in 0..2 {
                for z in 0..2 {
                    cube.push([x, y, z]);
                }
            }
        }
        let e = encode_geometry(&cube, None).unwrap();
        assert!(e.bytes.len() < 8 * 12);
        let d = decode_geometry(&e.bytes).unwrap();
        assert!(same_set(&d, &cube));
        assert_eq!(d, e.order);
    }

    #[test]
    fn random_roundtrip_in_256_cube() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut set = HashSet::new();
        while set.len() < 1000 {
            set.insert([rng.gen_range(0..256), rng.gen_range(0..256), rng.gen_range(0..256)]);
        }
        let coords: Vec<Coord> = set.into_iter().collect();
        let bbox = Bbox {
            min: [0; 3],
            max: [255; 3],
        };
        let e = encode_geometry(&coords, Some(bbox)).unwrap();
        let d = decode_geometry(&e.bytes).unwrap();
        assert!(same_set(&d, &coords));
        assert_eq!(d, e.order);
        assert_eq!(d, canonical_order(&coords, [0; 3]));
    }

    #[test]
    fn encode_errors() {
        let bbox = Bbox {
            min: [0; 3],
            max: [3; 3],
        };
        assert!(matches!(
            encode_geometry(&[[4, 0, 0]], Some(bbox)),
            Err(CodecError::OutOfBbox([4, 0, 0]))
        ));
        assert!(matches!(
            encode_geometry(&[[1, 1, 1], [1, 1, 1]], None),
            Err(CodecError::DuplicateCoord(_))
        ));
        assert!(encode_geometry(&[[0, 0, 0], [1 << 22, 0, 0]], None).is_err());
    }

    #[test]
    fn corrupt_streams_are_rejected() {
        let coords: Vec<Coord> = (0..50).map(|i| [i, i * 2 % 7, i % 3]).collect();
        let e = encode_geometry(&coords, None).unwrap();
        assert!(decode_geometry(&e.bytes[..e.bytes.len() - 1]).is_err());
        let mut longer = e.bytes.clone();
        longer.push(0);
        assert!(decode_geometry(&longer).is_err());
        let mut wrong_n = e.bytes.clone();
        wrong_n[0] = 51;
        assert!(decode_geometry(&wrong_n).is_err());
    }

    #[test]
    fn morton_order_matches_bit_interleave() {
        assert_eq!(morton([1, 0, 0]), 4);
        assert_eq!(morton([0, 1, 0]), 2);
        assert_eq!(morton([0, 0, 1]), 1);
        assert_eq!(morton([2, 0, 0]), 32);
        assert_eq!(morton([0x1F_FFFF; 3]), (1u64 << 63) - 1);
    }
}
