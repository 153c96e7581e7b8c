use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::voxel::{floor_div, Coord, SparseTensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Accuracy {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision and recall of the base-grid footprint of `coords` (each one a
/// `stride`³ block) against the ground-truth voxel set. An empty footprint
/// has precision zero.
pub fn footprint_accuracy(
    coords: &[Coord],
    stride: u32,
    gt: &HashSet<Coord>,
) -> Result<Accuracy, HarnessError> {
    if gt.is_empty() {
        return Err(HarnessError::UndefinedMetric("empty ground truth"));
    }
    if stride == 0 {
        return Err(HarnessError::InvalidConfig("stride must be positive".into()));
    }
    let cells: HashSet<Coord> = coords.iter().copied().collect();
    let tp = gt
        .iter()
        .filter(|m| cells.contains(&floor_div(**m, stride as i32)))
        .count() as f64;
    let footprint = cells.len() as f64 * (stride as f64).powi(3);
    let precision = if footprint > 0.0 { tp / footprint } else { 0.0 };
    let recall = tp / gt.len() as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Accuracy {
        precision,
        recall,
        f1,
    })
}

/// Fraction of ground-truth cells at the basic stride that were selected.
pub fn pooled_object_recall(
    selected: &[Coord],
    stride: u32,
    gt: &HashSet<Coord>,
) -> Result<f64, HarnessError> {
    if gt.is_empty() {
        return Err(HarnessError::UndefinedMetric("empty ground truth"));
    }
    let cells: HashSet<Coord> = gt.iter().map(|m| floor_div(*m, stride as i32)).collect();
    let sel: HashSet<&Coord> = selected.iter().collect();
    Ok(cells.iter().filter(|c| sel.contains(c)).count() as f64 / cells.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateMetrics {
    pub bytes: usize,
    /// Kilobytes per frame.
    pub kbpe: f64,
    /// Frame bytes per transmitted basic point; zero for empty frames.
    pub bytes_per_point: f64,
    pub compression_ratio: f64,
}

/// Uncompressed size of the stride-4 and stride-8 feature maps: three i32
/// coordinates plus `C` f32 features per point.
pub fn raw_feature_bytes(f3: &SparseTensor, f4: &SparseTensor) -> usize {
    [f3, f4]
        .iter()
        .map(|t| t.len() * (12 + 4 * t.channels()))
        .sum()
}

pub fn rate_metrics(bytes: usize, points: usize, raw_bytes: usize) -> RateMetrics {
    RateMetrics {
        bytes,
        kbpe: bytes as f64 / 1024.0,
        bytes_per_point: if points > 0 {
            bytes as f64 / points as f64
        } else {
            0.0
        },
        compression_ratio: if bytes > 0 {
            raw_bytes as f64 / bytes as f64
        } else {
            f64::INFINITY
        },
    }
}

/// Rate plus weighted accuracy drop.
pub fn rd_loss(rate: f64, acc_base: f64, acc: f64, lambda: f64) -> f64 {
    rate + lambda * (acc_base - acc)
}

/// Transfer-time accounting for the edge-to-cloud link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    /// Bytes per second.
    pub bandwidth: f64,
    /// Fixed latency in seconds.
    pub latency: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        // 10 Mbit/s uplink, 20 ms
        Self {
            bandwidth: 1.25e6,
            latency: 0.02,
        }
    }
}

impl ChannelModel {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite())
            || !(self.latency >= 0.0 && self.latency.is_finite())
        {
            return Err(HarnessError::InvalidConfig(
                "channel needs bandwidth > 0 and latency >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn transfer_time(&self, bytes: usize) -> f64 {
        self.latency + bytes as f64 / self.bandwidth
    }
}
