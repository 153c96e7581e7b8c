//! Compression of sparse voxel feature tensors for split 3D perception.
//!
//! The edge side voxelizes a scene, extracts multi-scale sparse features,
//! keeps only the object-like part of the deepest feature map and entropy
//! codes it into a framed bitstream. The cloud side decodes the frame and
//! rebuilds feature tensors (and, optionally, object point clouds from a
//! residual flag channel).

pub mod affc;
pub mod bitstream;
pub mod entropy;
pub mod fgc;
pub mod harness;
pub mod reconstruct;
pub mod seed;
pub mod transforms;
pub mod voxel;
