use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    decode_cloud, encode_features, extract_features, footprint_accuracy, generate_scene,
    pooled_object_recall, raw_feature_bytes, rate_metrics, rd_loss, ChannelModel, EncodeConfig,
    HarnessError, SceneSpec,
};
use crate::bitstream::Mode;
use crate::entropy::DEFAULT_STEP;
use crate::fgc::FgcParams;
use crate::reconstruct::ResidualParams;
use crate::transforms::CascadeConfig;
use crate::voxel::rescale_coords;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub mode: Mode,
    #[serde(default)]
    pub pool_kernel: Option<u32>,
}

/// Parameter grid of a rate-performance sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    /// Scene seeds; each replaces the seed of the scene spec.
    pub seeds: Vec<u64>,
    pub modes: Vec<ModeSpec>,
    pub k_th: Vec<f64>,
    pub d_p: Vec<f64>,
    /// Weight of the accuracy drop in the rate-accuracy loss.
    pub lambda: f64,
    pub quant_step: f64,
    pub cascade: CascadeConfig,
    pub residual: Option<ResidualParams>,
    pub channel: ChannelModel,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            modes: vec![
                ModeSpec {
                    mode: Mode::Tffc,
                    pool_kernel: None,
                },
                ModeSpec {
                    mode: Mode::Affc,
                    pool_kernel: None,
                },
            ],
            k_th: vec![crate::fgc::DEFAULT_K_TH],
            d_p: (0..=9).map(f64::from).collect(),
            lambda: 1.0,
            quant_step: DEFAULT_STEP,
            cascade: CascadeConfig::default(),
            residual: None,
            channel: ChannelModel::default(),
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() || self.modes.is_empty() || self.k_th.is_empty() || self.d_p.is_empty() {
            return Err(HarnessError::InvalidConfig("sweep grid has an empty axis".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(HarnessError::InvalidConfig("lambda must be finite and >= 0".into()));
        }
        self.channel.validate()
    }

    /// Number of rows the sweep emits.
    pub fn len(&self) -> usize {
        self.seeds.len() * self.modes.len() * self.k_th.len() * self.d_p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One CSV row. Metric cells are empty on error rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RpPoint {
    pub scene_seed: u64,
    pub mode: Mode,
    pub pool_kernel: u32,
    pub k_th: f64,
    pub d_p: f64,
    pub points: Option<usize>,
    pub bytes: Option<usize>,
    pub kbpe_frame: Option<f64>,
    pub bytes_per_point: Option<f64>,
    pub compression_ratio: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub acc_base: Option<f64>,
    pub rd_loss: Option<f64>,
    pub pooled_object_recall: Option<f64>,
    pub transfer_s: Option<f64>,
    pub error: String,
}

impl RpPoint {
    fn failed(seed: u64, cfg: &EncodeConfig, e: &HarnessError) -> Self {
        Self {
            scene_seed: seed,
            mode: cfg.mode,
            pool_kernel: cfg.kernel(),
            k_th: cfg.fgc.k_th,
            d_p: cfg.fgc.d_p,
            points: None,
            bytes: None,
            kbpe_frame: None,
            bytes_per_point: None,
            compression_ratio: None,
            precision: None,
            recall: None,
            f1: None,
            acc_base: None,
            rd_loss: None,
            pooled_object_recall: None,
            transfer_s: None,
            error: e.to_string(),
        }
    }
}

fn frame_configs(grid: &GridConfig) -> Vec<EncodeConfig> {
    let mut out = Vec::with_capacity(grid.modes.len() * grid.k_th.len() * grid.d_p.len());
    for m in &grid.modes {
        for &k_th in &grid.k_th {
            for &d_p in &grid.d_p {
                out.push(EncodeConfig {
                    mode: m.mode,
                    pool_kernel: m.pool_kernel,
                    fgc: FgcParams {
                        k_th,
                        d_p,
                        ..Default::default()
                    },
                    quant_step: grid.quant_step,
                    cascade: grid.cascade,
                    residual: grid.residual,
                });
            }
        }
    }
    out
}

fn scene_rows(spec: &SceneSpec, seed: u64, grid: &GridConfig) -> Vec<RpPoint> {
    let configs = frame_configs(grid);
    let spec = SceneSpec {
        seed,
        ..spec.clone()
    };
    let prepared = generate_scene(&spec).and_then(|(scene, gt)| {
        let feats = extract_features(&scene, &grid.cascade)?;
        Ok((scene, gt.union(), feats))
    });
    let (scene, gt, feats) = match prepared {
        Ok(p) => p,
        Err(e) => return configs.iter().map(|c| RpPoint::failed(seed, c, &e)).collect(),
    };
    let raw = raw_feature_bytes(&feats.f3, &feats.f4);
    let row = |cfg: &EncodeConfig| -> Result<RpPoint, HarnessError> {
        let edge = encode_features(&scene, &feats, cfg)?;
        let k = cfg.kernel();
        // Baseline accuracy: every pooled point transmitted.
        let base = rescale_coords(&edge.compressed, k)?;
        let acc_base = footprint_accuracy(base.coords(), base.stride(), &gt)?.f1;
        let dec = decode_cloud(&edge.bytes)?;
        let acc = footprint_accuracy(dec.f3d1.coords(), dec.f3d1.stride(), &gt)?;
        let rate = rate_metrics(edge.bytes.len(), dec.basic.len(), raw);
        let por = pooled_object_recall(dec.basic.coords(), cfg.basic_stride(), &gt)?;
        Ok(RpPoint {
            scene_seed: seed,
            mode: cfg.mode,
            pool_kernel: k,
            k_th: cfg.fgc.k_th,
            d_p: cfg.fgc.d_p,
            points: Some(dec.basic.len()),
            bytes: Some(rate.bytes),
            kbpe_frame: Some(rate.kbpe),
            bytes_per_point: Some(rate.bytes_per_point),
            compression_ratio: Some(rate.compression_ratio),
            precision: Some(acc.precision),
            recall: Some(acc.recall),
            f1: Some(acc.f1),
            acc_base: Some(acc_base),
            rd_loss: Some(rd_loss(rate.kbpe, acc_base, acc.f1, grid.lambda)),
            pooled_object_recall: Some(por),
            transfer_s: Some(grid.channel.transfer_time(rate.bytes)),
            error: String::new(),
        })
    };
    configs
        .iter()
        .map(|c| row(c).unwrap_or_else(|e| RpPoint::failed(seed, c, &e)))
        .collect()
}

/// Runs the grid over seeded scenes. Scenes are processed in parallel;
/// rows come out ordered by (seed, mode, k_th, d_p) as listed in the grid.
/// Per-frame failures become error rows.
pub fn sweep(spec: &SceneSpec, grid: &GridConfig) -> Result<Vec<RpPoint>, HarnessError> {
    grid.validate()?;
    Ok(grid
        .seeds
        .par_iter()
        .map(|&seed| scene_rows(spec, seed, grid))
        .collect::<Vec<_>>()
        .concat())
}

pub fn write_csv<W: Write>(w: W, rows: &[RpPoint]) -> Result<(), HarnessError> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}
