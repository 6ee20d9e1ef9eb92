//! Velocity-aware point transformer for moving object segmentation in
//! single sparse 2D radar scans.
//!
//! The crate is organized bottom-up:
//!
//! * [`numerics`]: tensors, kernels, reverse-mode tape, AdamW, checkpoints
//! * [`pointcloud`]: scan model, CSV format, sensor merging, synthetic scenes
//! * [`sampling`]: farthest point sampling, kNN, grouping
//! * [`layers`]: relative encodings, velocity attention, resampling layers
//! * [`network`]: the encoder-decoder model
//! * [`train`]: losses, metrics, threshold baseline, training loop

pub mod error;
pub mod layers;
pub mod network;
pub mod numerics;
pub mod pointcloud;
pub mod real;
pub mod sampling;
pub mod train;

pub use error::{Error, Result};
pub use network::{Model, ModelConfig};
pub use numerics::{ParamStore, Tensor};
pub use pointcloud::RadarScan;
pub use real::{Dtype, Precision, Real};
