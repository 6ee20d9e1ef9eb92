//! The five-stage encoder-decoder and its configuration.

mod model;

pub use model::{predict_from_logits, ForwardOutput, Model};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters; stored in every checkpoint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Feature width per stage; stage `s` holds `⌈N/2^s⌉` points.
    pub stage_channels: Vec<usize>,
    /// Neighborhood size of the velocity attention.
    pub n_vtl: usize,
    /// Neighborhood size of the transformer upsampling.
    pub n_tus: usize,
    /// Group size of the downsampling max pool.
    pub k_ds: usize,
    /// Width of the position encoding inside the upsampler.
    pub d_p: usize,
    /// Width of the velocity encoding inside the upsampler.
    pub d_v: usize,
    pub n_classes: usize,
    /// Run a velocity transformer block after every upsampler.
    pub decoder_blocks: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            stage_channels: vec![32, 64, 128, 256, 512],
            n_vtl: 16,
            n_tus: 12,
            k_ds: 16,
            d_p: 8,
            d_v: 4,
            n_classes: 2,
            decoder_blocks: true,
        }
    }
}

impl ModelConfig {
    pub fn paper() -> Self {
        Self::default()
    }

    /// Three narrow stages, for tests and CPU experiments.
    pub fn tiny() -> Self {
        Self {
            stage_channels: vec![8, 16, 32],
            n_vtl: 8,
            n_tus: 6,
            k_ds: 8,
            ..Self::default()
        }
    }

    pub fn num_stages(&self) -> usize {
        self.stage_channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_channels.is_empty() || self.stage_channels[0] == 0 {
            return Err(Error::Config("stage_channels must be non-empty and positive".into()));
        }
        if self.stage_channels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "stage_channels must be strictly increasing: {:?}",
                self.stage_channels
            )));
        }
        for (name, v) in [
            ("n_vtl", self.n_vtl),
            ("n_tus", self.n_tus),
            ("k_ds", self.k_ds),
            ("d_p", self.d_p),
            ("d_v", self.d_v),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.n_classes != 2 {
            return Err(Error::Config(format!(
                "n_classes must be 2 (moving/static), got {}",
                self.n_classes
            )));
        }
        Ok(())
    }
}
