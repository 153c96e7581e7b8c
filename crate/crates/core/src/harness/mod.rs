//! End-to-end orchestration: synthetic scenes with ground truth, the edge
//! encoder and cloud decoder for both modes, proxy accuracy, rate metrics
//! and rate-performance sweeps.

mod metrics;
mod pipeline;
mod scene;
mod sweep;

pub use metrics::{
    footprint_accuracy, pooled_object_recall, raw_feature_bytes, rate_metrics, rd_loss, Accuracy,
    ChannelModel, RateMetrics,
};
pub use pipeline::{
    decode_cloud, encode_edge, encode_features, extract_features, reconstruct_objects,
    DecodedFrame, DecodedResidual, EdgeFeatures, EdgeFrame, EncodeConfig, ObjectCloud,
    DECODER_SEED,
};
pub use scene::{generate_scene, GroundTruth, SceneSpec, BG_HI, BG_LO};
pub use sweep::{sweep, write_csv, GridConfig, ModeSpec, RpPoint};

use crate::affc::AffcError;
use crate::bitstream::FrameError;
use crate::entropy::CodecError;
use crate::fgc::FgcError;
use crate::reconstruct::ReconstructError;
use crate::transforms::TransformError;
use crate::voxel::VoxelError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("could not place object {object} after {attempts} attempts")]
    Placement { object: usize, attempts: usize },
    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),
    #[error("edge/cloud divergence: {0}")]
    Divergence(String),
    #[error(transparent)]
    Voxel(#[from] VoxelError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Fgc(#[from] FgcError),
    #[error(transparent)]
    Affc(#[from] AffcError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Reconstruct(#[from] ReconstructError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// True for faults caused by the input (bad files, configs, frames)
    /// rather than by the program.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, HarnessError::Io(_))
    }
}
