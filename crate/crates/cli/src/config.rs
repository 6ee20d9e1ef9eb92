use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use velo_attn_core::pointcloud::SynthConfig;
use velo_attn_core::train::TrainConfig;
use velo_attn_core::{Error, ModelConfig, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Channels [8,16,32], small neighborhoods; minutes on a laptop CPU.
    Tiny,
    /// Full-size network and optimizer settings.
    Paper,
}

/// Everything a command needs, with defaults for every field. Loaded from a
/// JSON file, then adjusted by the preset and command-line flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub model_seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub dataset_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            synth: SynthConfig::default(),
            model_seed: 0,
            n_train: 256,
            n_val: 64,
            n_test: 64,
            dataset_dir: None,
            checkpoint: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply_preset(&mut self, preset: Preset) {
        match preset {
            Preset::Tiny => {
                self.model = ModelConfig::tiny();
                self.train.batch_size = 16;
            }
            Preset::Paper => {
                self.model = ModelConfig::paper();
                self.train.epochs = 50;
                self.train.batch_size = 128;
                self.train.lr0 = 0.0005;
            }
        }
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.dataset_dir
            .clone()
            .unwrap_or_else(|| self.out_dir.join("dataset"))
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.out_dir.join("model.ckpt"))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.synth.validate()
    }

    /// Writes the effective configuration as `<out_dir>/<command>.config.json`.
    pub fn echo(&self, command: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e))?;
        let path = self.out_dir.join(format!("{command}.config.json"));
        write_json(&path, self)?;
        Ok(path)
    }
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
