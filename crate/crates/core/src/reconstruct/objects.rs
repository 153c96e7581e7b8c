use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ReconstructError, ResidualFlags, ResidualParams};
use crate::voxel::Coord;

/// Oriented box, yaw about +z. Units follow whatever grid the points use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionBox {
    pub center: [f64; 3],
    /// `(l, w, h)` along the box's own x, y, z axes.
    pub size: [f64; 3],
    pub yaw: f64,
    #[serde(default)]
    pub label: String,
    #[serde(default = "one")]
    pub score: f64,
}

fn one() -> f64 {
    1.0
}

impl DetectionBox {
    pub fn validate(&self, index: usize) -> Result<(), ReconstructError> {
        let bad = |reason| Err(ReconstructError::InvalidBox { index, reason });
        if !self.size.iter().all(|&s| s > 0.0 && s.is_finite()) {
            return bad("sizes must be positive and finite");
        }
        if !self.center.iter().all(|c| c.is_finite()) || !self.yaw.is_finite() {
            return bad("non-finite center or yaw");
        }
        if self.score.is_nan() {
            return bad("score is NaN");
        }
        Ok(())
    }

    /// Box-frame coordinates of `p`.
    pub fn to_local(&self, p: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        let d = [p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]];
        [c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]]
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let u = self.to_local(p);
        (0..3).all(|a| u[a].abs() <= self.size[a] / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetachedObject {
    pub box_index: usize,
    pub label: String,
    pub score: f64,
    pub points: Vec<[f64; 3]>,
}

/// Re-enumerates candidates from `seeds` (base-grid coordinates), keeps the
/// flagged ones and detaches them per box. A point inside several boxes goes
/// to the highest-scoring one (lowest index on ties). Objects come out by
/// descending score, then box index.
pub fn sopcg(
    seeds: &[Coord],
    flags: &ResidualFlags,
    params: &ResidualParams,
    boxes: &[DetectionBox],
) -> Result<Vec<DetachedObject>, ReconstructError> {
    params.validate()?;
    for (i, b) in boxes.iter().enumerate() {
        b.validate(i)?;
    }
    let cands = params.candidates(seeds);
    if cands.len() != flags.count as usize {
        return Err(ReconstructError::Alignment {
            expected: cands.len(),
            got: flags.count as usize,
        });
    }
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[b].score.total_cmp(&boxes[a].score).then(a.cmp(&b)));

    let mut per_box: Vec<Vec<[f64; 3]>> = vec![Vec::new(); boxes.len()];
    for &pos in &flags.positions {
        if pos >= flags.count {
            return Err(ReconstructError::PositionOutOfRange {
                position: pos,
                count: flags.count,
            });
        }
        let p = cands.point(pos as usize);
        if let Some(&b) = order.iter().find(|&&b| boxes[b].contains(p)) {
            per_box[b].push(p);
        }
    }
    Ok(order
        .into_iter()
        .map(|b| DetachedObject {
            box_index: b,
            label: boxes[b].label.clone(),
            score: boxes[b].score,
            points: std::mem::take(&mut per_box[b]),
        })
        .collect())
}

pub fn read_boxes<R: Read>(r: R) -> Result<Vec<DetectionBox>, ReconstructError> {
    let boxes: Vec<DetectionBox> = serde_json::from_reader(r)?;
    for (i, b) in boxes.iter().enumerate() {
        b.validate(i)?;
    }
    Ok(boxes)
}

pub fn write_boxes<W: Write>(w: W, boxes: &[DetectionBox]) -> Result<(), ReconstructError> {
    serde_json::to_writer_pretty(w, boxes)?;
    Ok(())
}
