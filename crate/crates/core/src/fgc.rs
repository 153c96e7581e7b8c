//! Fine-grained compression: keep the points whose activation sits on the
//! steep right-hand tail of the sorted per-channel curve, merge two channels,
//! then grow the selection by a distance threshold.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::voxel::{Coord, GridIndex, SparseTensor};

pub const DEFAULT_K_TH: f64 = 0.02;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FgcError {
    #[error("selection needs at least two channels, tensor has {0}")]
    TooFewChannels(usize),
    #[error("selection channel {index} out of range for {channels} channels")]
    ChannelOutOfRange { index: usize, channels: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FgcParams {
    /// Slope threshold, in feature units per sorted index.
    #[serde(default = "default_k_th")]
    pub k_th: f64,
    /// Post-processing distance, in grid units of the input tensor.
    #[serde(default)]
    pub d_p: f64,
    #[serde(default = "default_channels")]
    pub selection_channels: [usize; 2],
}

fn default_k_th() -> f64 {
    DEFAULT_K_TH
}

fn default_channels() -> [usize; 2] {
    [0, 1]
}

impl Default for FgcParams {
    fn default() -> Self {
        Self {
            k_th: DEFAULT_K_TH,
            d_p: 0.0,
            selection_channels: [0, 1],
        }
    }
}

impl FgcParams {
    pub fn validate(&self) -> Result<(), FgcError> {
        if !(self.k_th >= 0.0 && self.k_th.is_finite()) {
            return Err(FgcError::InvalidParam("k_th must be finite and >= 0"));
        }
        if !(self.d_p >= 0.0 && self.d_p.is_finite()) {
            return Err(FgcError::InvalidParam("d_p must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Surviving coordinates, in input row order.
    pub selected: Vec<Coord>,
    /// Sorted position where each channel's selected suffix begins
    /// (equal to the point count when nothing was selected).
    pub suffix_starts: [usize; 2],
    pub per_channel: [usize; 2],
    pub union: usize,
}

impl SelectionResult {
    pub fn count(&self) -> usize {
        self.selected.len()
    }
}

/// Stable ascending order of `values`, ties broken by index.
pub fn ascending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

/// Sorted position where the selected suffix starts. Position `i >= 1` has
/// slope `v[i] - v[i-1]`; scanning down from the top, positions are kept
/// while their slope reaches `k_th`.
pub fn suffix_start(sorted: &[f64], k_th: f64) -> usize {
    let mut start = sorted.len();
    while start > 1 && sorted[start - 1] - sorted[start - 2] >= k_th {
        start -= 1;
    }
    start
}

/// Original indices of the steep tail of the ascending curve.
pub fn slope_select(values: &[f64], k_th: f64) -> Vec<usize> {
    let order = ascending_order(values);
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    order[suffix_start(&sorted, k_th)..].to_vec()
}

pub fn channel_compensate(s1: &HashSet<Coord>, s2: &HashSet<Coord>) -> HashSet<Coord> {
    s1.union(s2).copied().collect()
}

/// Members of `full` within `d_p` of the selection, in `full` order.
pub fn post_process(full: &[Coord], selected: &[Coord], d_p: f64) -> Vec<Coord> {
    if selected.is_empty() {
        return Vec::new();
    }
    let index = GridIndex::from_coords(selected);
    full.iter()
        .copied()
        .filter(|c| index.any_within([c[0] as f64, c[1] as f64, c[2] as f64], d_p))
        .collect()
}

pub fn fgc(t: &SparseTensor, params: &FgcParams) -> Result<(SparseTensor, SelectionResult), FgcError> {
    params.validate()?;
    if t.channels() < 2 {
        return Err(FgcError::TooFewChannels(t.channels()));
    }
    for &index in &params.selection_channels {
        if index >= t.channels() {
            return Err(FgcError::ChannelOutOfRange {
                index,
                channels: t.channels(),
            });
        }
    }

    let mut per_channel = [0usize; 2];
    let mut suffix_starts = [0usize; 2];
    let mut sets: [HashSet<Coord>; 2] = Default::default();
    for (slot, &ch) in params.selection_channels.iter().enumerate() {
        let values = t.channel(ch);
        let order = ascending_order(&values);
        let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        let start = suffix_start(&sorted, params.k_th);
        suffix_starts[slot] = start;
        per_channel[slot] = order.len() - start;
        sets[slot] = order[start..].iter().map(|&i| t.coords()[i]).collect();
    }
    let union = channel_compensate(&sets[0], &sets[1]);
    let seeds: Vec<Coord> = t.coords().iter().copied().filter(|c| union.contains(c)).collect();
    let selected = if params.d_p == 0.0 {
        seeds
    } else {
        post_process(t.coords(), &seeds, params.d_p)
    };
    let keep: HashSet<Coord> = selected.iter().copied().collect();
    let out = t.filter(|c| keep.contains(c));
    Ok((
        out,
        SelectionResult {
            selected,
            suffix_starts,
            per_channel,
            union: union.len(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_curve_selects_nothing() {
        assert!(slope_select(&[1.5; 10], DEFAULT_K_TH).is_empty());
        assert!(slope_select(&[], DEFAULT_K_TH).is_empty());
        assert!(slope_select(&[3.0], 0.0).is_empty());
    }

    #[test]
    fn steep_tail() {
        let mut got = slope_select(&[0.0, 0.0, 0.0, 0.0, 10.0, 20.0], 5.0);
        got.sort();
        assert_eq!(got, vec![4, 5]);
        // shuffled input, same values
        let mut got = slope_select(&[20.0, 0.0, 10.0, 0.0, 0.0, 0.0], 5.0);
        got.sort();
        assert_eq!(got, vec![0, 2]);
    }

    #[test]
    fn stops_at_first_shallow_step() {
        // slopes from the top: 5, 0.01, 5 -> only the top point survives
        assert_eq!(slope_select(&[0.0, 5.0, 5.01, 10.01], 1.0), vec![3]);
    }

    #[test]
    fn compensation_is_union() {
        let a: HashSet<Coord> = [[0, 0, 0], [1, 0, 0], [2, 0, 0]].into();
        let b: HashSet<Coord> = [[1, 0, 0]].into();
        assert_eq!(channel_compensate(&a, &b), a);
        let c: HashSet<Coord> = [[5, 0, 0], [6, 0, 0], [7, 0, 0], [8, 0, 0]].into();
        assert_eq!(channel_compensate(&a, &c).len(), 7);
    }

    #[test]
    fn post_process_radius() {
        let full = [[0, 0, 0], [1, 0, 0], [3, 0, 0]];
        assert_eq!(post_process(&full, &[[0, 0, 0]], 0.0), vec![[0, 0, 0]]);
        assert_eq!(post_process(&full, &[[0, 0, 0]], 1.0), vec![[0, 0, 0], [1, 0, 0]]);
        assert!(post_process(&full, &[], 5.0).is_empty());
    }

    #[test]
    fn fgc_on_flat_and_blob() {
        let coords: Vec<Coord> = (0..20).map(|i| [i, 0, 0]).collect();
        let flat = SparseTensor::new(1, 2, coords.clone(), vec![1.0; 40]).unwrap();
        let (out, sel) = fgc(&flat, &FgcParams::default()).unwrap();
        assert!(out.is_empty());
        assert_eq!(sel.per_channel, [0, 0]);

        let mut feats = vec![1.0; 40];
        for (k, i) in [7usize, 8, 9].iter().enumerate() {
            feats[i * 2] = 10.0 + k as f64;
            feats[i * 2 + 1] = 12.0 + k as f64;
        }
        let blob = SparseTensor::new(1, 2, coords, feats).unwrap();
        let (out, sel) = fgc(&blob, &FgcParams::default()).unwrap();
        assert_eq!(out.coords(), &[[7, 0, 0], [8, 0, 0], [9, 0, 0]]);
        assert_eq!(sel.union, 3);
        assert_eq!(out.channels(), 2);

        let grown = FgcParams {
            d_p: 1.0,
            ..Default::default()
        };
        let (out, _) = fgc(&blob, &grown).unwrap();
        assert_eq!(out.len(), 5);
    }

    #[test]
    fn rejects_bad_inputs() {
        let t = SparseTensor::new(1, 1, vec![[0, 0, 0]], vec![1.0]).unwrap();
        assert_eq!(fgc(&t, &FgcParams::default()).unwrap_err(), FgcError::TooFewChannels(1));
        let t = SparseTensor::new(1, 2, vec![[0, 0, 0]], vec![1.0, 2.0]).unwrap();
        let p = FgcParams {
            selection_channels: [0, 2],
            ..Default::default()
        };
        assert!(matches!(fgc(&t, &p), Err(FgcError::ChannelOutOfRange { index: 2, .. })));
        let p = FgcParams {
            k_th: -1.0,
            ..Default::default()
        };
        assert!(fgc(&t, &p).is_err());
    }
}
