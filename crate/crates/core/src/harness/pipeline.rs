use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::affc::{build_affc, decode_branch, encode_branch, AffcPayload, BranchSeeds};
use crate::bitstream::{self, FfcBitstream, FfcHeader, Mode, Segment, SegmentTag};
use crate::entropy::{
    decode_attributes, decode_geometry, decode_residual, encode_attributes, encode_geometry,
    encode_residual, Bbox, QuantSpec, DEFAULT_STEP,
};
use crate::fgc::{fgc, FgcParams, SelectionResult};
use crate::reconstruct::{
    assign_surface_flags, cube_upsample, densify_object, sopcg, DetectionBox, Densifier,
    ResidualFlags, ResidualParams, PATCH_SIZE,
};
use crate::seed;
use crate::transforms::{
    channel_project_with, extract_cascade_ref, spatial_upsample_ref, sparse_maxpool, CascadeConfig,
    ProjectionInit,
};
use crate::voxel::{rescale_coords, Coord, GridIndex, SparseTensor, VoxelScene};

/// Stride of the deepest cascade output.
const F4_STRIDE: u32 = 8;
const F3_STRIDE: u32 = 4;
const CGC_HIDDEN: usize = 16;
const CGC_CHANNELS: usize = 4;
const DECODED_CHANNELS: usize = 64;
/// Seed of the cloud-side projection stand-ins.
pub const DECODER_SEED: u64 = 0xDEC0DE;

/// Edge-side encoder settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodeConfig {
    pub mode: Mode,
    /// Basic-branch pooling kernel; 2 for T-FFC and 3 for A-FFC when unset.
    pub pool_kernel: Option<u32>,
    pub fgc: FgcParams,
    pub quant_step: f64,
    pub cascade: CascadeConfig,
    pub residual: Option<ResidualParams>,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Tffc,
            pool_kernel: None,
            fgc: FgcParams::default(),
            quant_step: DEFAULT_STEP,
            cascade: CascadeConfig::default(),
            residual: None,
        }
    }
}

impl EncodeConfig {
    pub fn kernel(&self) -> u32 {
        self.pool_kernel.unwrap_or(match self.mode {
            Mode::Tffc => 2,
            Mode::Affc => crate::affc::AFFC_POOL_KERNEL,
        })
    }

    pub fn basic_stride(&self) -> u32 {
        F4_STRIDE * self.kernel()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let k = self.kernel();
        if k == 0 || k > 255 || F4_STRIDE * k > u16::MAX as u32 {
            return Err(HarnessError::InvalidConfig(format!("pool kernel {k} out of range")));
        }
        self.fgc.validate()?;
        QuantSpec::new(self.quant_step)?;
        if let Some(r) = &self.residual {
            r.validate()?;
            if r.scope > u16::MAX as u32 || r.density > u8::MAX as u32 {
                return Err(HarnessError::InvalidConfig(
                    "residual scope must fit u16 and density u8".into(),
                ));
            }
        }
        Ok(())
    }
}

/// The two cascade outputs the encoder consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFeatures {
    pub f3: SparseTensor,
    pub f4: SparseTensor,
}

pub fn extract_features(scene: &VoxelScene, cfg: &CascadeConfig) -> Result<EdgeFeatures, HarnessError> {
    let (f3, f4) = extract_cascade_ref(scene, cfg)?;
    Ok(EdgeFeatures { f3, f4 })
}

/// Encoder output plus the intermediate tensors, for metrics and checks.
#[derive(Debug, Clone)]
pub struct EdgeFrame {
    pub bytes: Vec<u8>,
    /// Pooled and channel-compressed tensor before selection.
    pub compressed: SparseTensor,
    /// The selected basic tensor as the encoder holds it (unquantized).
    pub basic: SparseTensor,
    pub selection: SelectionResult,
    pub affc: Option<AffcPayload>,
    pub residual: Option<ResidualFlags>,
}

/// Coarse-grained stage: maxpool by `k`, then 64 -> 16 -> 4 channels.
fn coarse_compress(f4: &SparseTensor, k: u32, cfg: &CascadeConfig) -> Result<SparseTensor, HarnessError> {
    let pooled = sparse_maxpool(f4, k)?;
    let hidden = channel_project_with(&pooled, CGC_HIDDEN, seed::derive(cfg.seed, 5), cfg.init)?;
    Ok(channel_project_with(&hidden, CGC_CHANNELS, seed::derive(cfg.seed, 6), cfg.init)?)
}

fn scale_coords(coords: &[Coord], s: u32) -> Vec<Coord> {
    let s = s as i32;
    coords.iter().map(|c| [c[0] * s, c[1] * s, c[2] * s]).collect()
}

fn residual_payload(p: &ResidualParams, flags: &ResidualFlags) -> Result<Vec<u8>, HarnessError> {
    let body = encode_residual(&flags.positions)?;
    let mut out = Vec::with_capacity(7 + body.len());
    out.extend_from_slice(&(p.scope as u16).to_le_bytes());
    out.push(p.density as u8);
    out.extend_from_slice(&flags.count.to_le_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

/// Encodes one frame from precomputed cascade features.
pub fn encode_features(
    scene: &VoxelScene,
    feats: &EdgeFeatures,
    cfg: &EncodeConfig,
) -> Result<EdgeFrame, HarnessError> {
    cfg.validate()?;
    let q = QuantSpec::new(cfg.quant_step)?.as_transmitted();
    let k = cfg.kernel();
    let s_basic = cfg.basic_stride();
    let compressed = coarse_compress(&feats.f4, k, &cfg.cascade)?;
    let (basic, selection) = fgc(&compressed, &cfg.fgc)?;

    let geom = encode_geometry(basic.coords(), None)?;
    let ordered = basic.reorder(&geom.order).expect("coder emits the input set");
    let attrs = encode_attributes(ordered.feats(), ordered.len(), ordered.channels(), q)?;
    let mut segments = vec![
        Segment::new(SegmentTag::GeomBasic, geom.bytes),
        Segment::new(SegmentTag::AttrBasic, attrs),
    ];

    let affc = match cfg.mode {
        Mode::Tffc => None,
        Mode::Affc => {
            let seeds = BranchSeeds::derive(cfg.cascade.seed);
            let p = build_affc(&feats.f3, &feats.f4, &basic, &seeds, cfg.cascade.init)?;
            segments.push(Segment::new(
                SegmentTag::AttrB3,
                encode_branch(&geom.order, s_basic, &p.branch3, q)?,
            ));
            segments.push(Segment::new(
                SegmentTag::AttrB4,
                encode_branch(&geom.order, s_basic, &p.branch4, q)?,
            ));
            Some(p)
        }
    };

    let residual = match &cfg.residual {
        None => None,
        Some(rp) => {
            let cands = cube_upsample(&scale_coords(basic.coords(), s_basic), rp.scope, rp.density);
            let flags = if scene.is_empty() {
                ResidualFlags::new(cands.len() as u32, Vec::new())?
            } else {
                assign_surface_flags(&cands, &GridIndex::from_coords(scene.coords()), rp.d_s)?
            };
            segments.push(Segment::new(SegmentTag::Residual, residual_payload(rp, &flags)?));
            Some(flags)
        }
    };

    let bbox = Bbox::of(basic.coords()).map_or([0; 6], |b| {
        [b.min[0], b.min[1], b.min[2], b.max[0], b.max[1], b.max[2]]
    });
    let branch = |on: bool, v: u32| if on { v } else { 0 };
    let is_affc = cfg.mode == Mode::Affc;
    let header = FfcHeader {
        mode: cfg.mode,
        pool_kernel: k as u8,
        strides: [
            s_basic as u16,
            branch(is_affc, F3_STRIDE) as u16,
            branch(is_affc, F4_STRIDE) as u16,
        ],
        channels: [
            CGC_CHANNELS as u8,
            branch(is_affc, crate::affc::BRANCH_CHANNELS as u32) as u8,
            branch(is_affc, crate::affc::BRANCH_CHANNELS as u32) as u8,
        ],
        quant_step: q.step as f32,
        bbox,
        k_th: cfg.fgc.k_th as f32,
        d_p: cfg.fgc.d_p as f32,
        segment_count: segments.len() as u8,
    };
    let bytes = bitstream::serialize(&FfcBitstream { header, segments })?;
    Ok(EdgeFrame {
        bytes,
        compressed,
        basic,
        selection,
        affc,
        residual,
    })
}

/// Full edge pipeline: cascade, coarse and fine compression, entropy coding.
pub fn encode_edge(scene: &VoxelScene, cfg: &EncodeConfig) -> Result<EdgeFrame, HarnessError> {
    let feats = extract_features(scene, &cfg.cascade)?;
    encode_features(scene, &feats, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedResidual {
    pub scope: u32,
    pub density: u32,
    pub flags: ResidualFlags,
}

/// Cloud-side tensors. `f3d1` is the basic branch back at stride 8 with 64
/// channels. For T-FFC `f3d2` and `f3d3` are its two successive upsamplings
/// (strides 4 and 2); for A-FFC they are the expanded stride-4 and stride-8
/// branches.
#[derive(Debug, Clone)]
pub struct DecodedFrame {
    pub header: FfcHeader,
    /// Dequantized basic tensor in geometry-decoder order.
    pub basic: SparseTensor,
    pub branch3: Option<SparseTensor>,
    pub branch4: Option<SparseTensor>,
    pub f3d1: SparseTensor,
    pub f3d2: SparseTensor,
    pub f3d3: SparseTensor,
    pub residual: Option<DecodedResidual>,
}

impl DecodedFrame {
    /// Basic coordinates in base-grid units: the residual lattice seeds.
    pub fn residual_seeds(&self) -> Vec<Coord> {
        scale_coords(self.basic.coords(), self.header.strides[0] as u32)
    }
}

fn expand(t: &SparseTensor, tags: [u64; 2]) -> Result<SparseTensor, HarnessError> {
    let init = ProjectionInit::Symmetric;
    let h = channel_project_with(t, CGC_HIDDEN, seed::derive(DECODER_SEED, tags[0]), init)?;
    Ok(channel_project_with(&h, DECODED_CHANNELS, seed::derive(DECODER_SEED, tags[1]), init)?)
}

fn upsample(t: &SparseTensor, tag: u64) -> Result<SparseTensor, HarnessError> {
    let up = spatial_upsample_ref(t)?;
    Ok(channel_project_with(
        &up,
        DECODED_CHANNELS,
        seed::derive(DECODER_SEED, tag),
        ProjectionInit::Symmetric,
    )?)
}

fn parse_residual(bytes: &[u8]) -> Result<DecodedResidual, HarnessError> {
    if bytes.len() < 7 {
        return Err(crate::entropy::CodecError::Truncated { offset: bytes.len() }.into());
    }
    let scope = u16::from_le_bytes([bytes[0], bytes[1]]) as u32;
    let density = bytes[2] as u32;
    if density == 0 {
        return Err(HarnessError::Divergence("residual density is zero".into()));
    }
    let count = u32::from_le_bytes(bytes[3..7].try_into().unwrap());
    let positions = decode_residual(&bytes[7..]).map_err(|e| e.shifted(7))?;
    Ok(DecodedResidual {
        scope,
        density,
        flags: ResidualFlags::new(count, positions)?,
    })
}

/// Parses and decodes a frame into cloud-side tensors.
pub fn decode_cloud(bytes: &[u8]) -> Result<DecodedFrame, HarnessError> {
    let frame = bitstream::parse(bytes)?;
    let h = frame.header.clone();
    let k = h.pool_kernel as u32;
    let s_basic = h.strides[0] as u32;
    if s_basic != F4_STRIDE * k {
        return Err(HarnessError::Divergence(format!(
            "basic stride {s_basic} does not match pool kernel {k}"
        )));
    }
    let q = QuantSpec::new(h.quant_step as f64)?;
    let seg = |t| frame.segment(t).expect("parse enforces the mode structure");

    let coords = decode_geometry(seg(SegmentTag::GeomBasic))?;
    let (n, c, feats) = decode_attributes(seg(SegmentTag::AttrBasic), q)?;
    if n != coords.len() {
        return Err(HarnessError::Divergence(format!(
            "{n} basic attribute rows for {} coordinates",
            coords.len()
        )));
    }
    if c != h.channels[0] as usize {
        return Err(HarnessError::Divergence(format!(
            "{c} basic channels, header declares {}",
            h.channels[0]
        )));
    }
    let basic = SparseTensor::new(s_basic, c.max(1), coords, feats)?;
    let f3d1 = expand(&rescale_coords(&basic, k)?, [1, 2])?;

    let (branch3, branch4, f3d2, f3d3) = match h.mode {
        Mode::Tffc => {
            let f3d2 = upsample(&f3d1, 3)?;
            let f3d3 = upsample(&f3d2, 4)?;
            (None, None, f3d2, f3d3)
        }
        Mode::Affc => {
            let guide = basic.coords();
            let b3 = decode_branch(seg(SegmentTag::AttrB3), guide, s_basic, h.strides[1] as u32, q)?;
            let b4 = decode_branch(seg(SegmentTag::AttrB4), guide, s_basic, h.strides[2] as u32, q)?;
            let f3d2 = expand(&b3, [5, 6])?;
            let f3d3 = expand(&b4, [7, 8])?;
            (Some(b3), Some(b4), f3d2, f3d3)
        }
    };
    let residual = frame
        .segment(SegmentTag::Residual)
        .map(parse_residual)
        .transpose()?;
    Ok(DecodedFrame {
        header: h,
        basic,
        branch3,
        branch4,
        f3d1,
        f3d2,
        f3d3,
        residual,
    })
}

/// One reconstructed object: its flagged sparse points and the densified
/// cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectCloud {
    pub box_index: usize,
    pub label: String,
    pub sparse: Vec<[f64; 3]>,
    pub dense: Vec<[f64; 3]>,
}

/// Flag filtering, box detaching, patch partition and densification.
pub fn reconstruct_objects(
    decoded: &DecodedFrame,
    boxes: &[DetectionBox],
    densifier: &dyn Densifier,
    seed: u64,
) -> Result<Vec<ObjectCloud>, HarnessError> {
    let res = decoded.residual.as_ref().ok_or_else(|| {
        HarnessError::InvalidConfig("frame carries no residual segment".into())
    })?;
    let params = ResidualParams {
        scope: res.scope,
        density: res.density,
        d_s: 0.0,
    };
    let objects = sopcg(&decoded.residual_seeds(), &res.flags, &params, boxes)?;
    Ok(objects
        .into_iter()
        .map(|o| {
            let dense = densify_object(
                &o.points,
                PATCH_SIZE,
                seed::derive(seed, o.box_index as u64),
                densifier,
            );
            ObjectCloud {
                box_index: o.box_index,
                label: o.label,
                sparse: o.points,
                dense,
            }
        })
        .collect())
}
