use std::collections::HashSet;

use super::VoxelError;

/// Integer grid coordinate.
pub type Coord = [i32; 3];

/// A set of occupied coordinates at some stride, each carrying `channels`
/// feature values. Features are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensor {
    stride: u32,
    channels: usize,
    coords: Vec<Coord>,
    feats: Vec<f64>,
}

impl SparseTensor {
    pub fn new(
        stride: u32,
        channels: usize,
        coords: Vec<Coord>,
        feats: Vec<f64>,
    ) -> Result<Self, VoxelError> {
        if stride == 0 {
            return Err(VoxelError::InvalidStride(stride));
        }
        if channels == 0 {
            return Err(VoxelError::ZeroChannels);
        }
        if feats.len() != coords.len() * channels {
            return Err(VoxelError::ShapeMismatch {
                rows: coords.len(),
                channels,
                values: feats.len(),
            });
        }
        let mut seen = HashSet::with_capacity(coords.len());
        for c in &coords {
            if !seen.insert(*c) {
                return Err(VoxelError::DuplicateCoord(*c));
            }
        }
        Ok(Self {
            stride,
            channels,
            coords,
            feats,
        })
    }

    /// Builds a tensor whose coordinates are already known to be distinct.
    pub(crate) fn from_parts_unchecked(
        stride: u32,
        channels: usize,
        coords: Vec<Coord>,
        feats: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(feats.len(), coords.len() * channels);
        debug_assert!(stride >= 1 && channels >= 1);
        Self {
            stride,
            channels,
            coords,
            feats,
        }
    }

    pub fn empty(stride: u32, channels: usize) -> Self {
        Self::from_parts_unchecked(stride.max(1), channels.max(1), Vec::new(), Vec::new())
    }

    pub fn stride(&self) -> u32 {
        self.stride
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn feats(&self) -> &[f64] {
        &self.feats
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.feats[i * self.channels..(i + 1) * self.channels]
    }

    /// Values of one channel, in row order.
    pub fn channel(&self, ch: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.feats[i * self.channels + ch]).collect()
    }

    pub fn coord_set(&self) -> HashSet<Coord> {
        self.coords.iter().copied().collect()
    }

    /// Keeps rows for which `keep` returns true, preserving order.
    pub fn filter<F: FnMut(&Coord) -> bool>(&self, mut keep: F) -> SparseTensor {
        let mut coords = Vec::new();
        let mut feats = Vec::new();
        for (i, c) in self.coords.iter().enumerate() {
            if keep(c) {
                coords.push(*c);
                feats.extend_from_slice(self.row(i));
            }
        }
        Self::from_parts_unchecked(self.stride, self.channels, coords, feats)
    }

    /// Reorders rows so that coordinates appear in the order given by `order`.
    /// Every coordinate of `order` must be present.
    pub fn reorder(&self, order: &[Coord]) -> Option<SparseTensor> {
        let pos: std::collections::HashMap<Coord, usize> =
            self.coords.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        let mut feats = Vec::with_capacity(order.len() * self.channels);
        for c in order {
            let i = *pos.get(c)?;
            feats.extend_from_slice(self.row(i));
        }
        Some(Self::from_parts_unchecked(
            self.stride,
            self.channels,
            order.to_vec(),
            feats,
        ))
    }

    pub fn into_parts(self) -> (u32, usize, Vec<Coord>, Vec<f64>) {
        (self.stride, self.channels, self.coords, self.feats)
    }
}

/// Multiplies every coordinate by `ratio` and divides the stride by it, so the
/// tensor is re-expressed on a finer grid without moving any feature.
pub fn rescale_coords(t: &SparseTensor, ratio: u32) -> Result<SparseTensor, VoxelError> {
    if ratio == 0 || !t.stride().is_multiple_of(ratio) {
        return Err(VoxelError::InvalidRatio {
            stride: t.stride(),
            ratio,
        });
    }
    let r = ratio as i32;
    let coords = t
        .coords()
        .iter()
        .map(|c| [c[0] * r, c[1] * r, c[2] * r])
        .collect();
    Ok(SparseTensor::from_parts_unchecked(
        t.stride() / ratio,
        t.channels(),
        coords,
        t.feats().to_vec(),
    ))
}

#[inline]
pub fn floor_div(c: Coord, k: i32) -> Coord {
    [c[0].div_euclid(k), c[1].div_euclid(k), c[2].div_euclid(k)]
}
