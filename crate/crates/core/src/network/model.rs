use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{Downsample, Fc, Geometry, Linear, StageState, TransformerUpsample, VelocityBlock};
use crate::network::ModelConfig;
use crate::numerics::checkpoint::{decode_checkpoint, encode_checkpoint};
use crate::numerics::{NodeId, ParamStore, Tape, Tensor};
use crate::pointcloud::RadarScan;
use crate::real::Real;

#[derive(Clone, Debug)]
struct Architecture {
    input_fc: Fc,
    input_out: Linear,
    encoder: Vec<VelocityBlock>,
    down: Vec<Downsample>,
    up: Vec<TransformerUpsample>,
    decoder: Vec<VelocityBlock>,
    head_fc1: Linear,
    head_fc2: Linear,
}

impl Architecture {
    fn build<T: Real>(config: &ModelConfig, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng) -> Result<Self> {
        let ch = &config.stage_channels;
        let c0 = ch[0];
        let input_fc = Fc::new(store, "input.fc", 4, c0, rng)?;
        let input_out = Linear::new(store, "input.out", c0, c0, true, rng)?;
        let mut encoder = Vec::new();
        let mut down = Vec::new();
        for (s, &c) in ch.iter().enumerate() {
            if s > 0 {
                down.push(Downsample::new(
                    store,
                    &format!("down{s}"),
                    ch[s - 1],
                    c,
                    config.k_ds,
                    rng,
                )?);
            }
            encoder.push(VelocityBlock::new(store, &format!("enc{s}"), c, config.n_vtl, rng)?);
        }
        let mut up = Vec::new();
        let mut decoder = Vec::new();
        for s in (1..ch.len()).rev() {
            up.push(TransformerUpsample::new(
                store,
                &format!("up{s}"),
                ch[s],
                ch[s - 1],
                config.d_p,
                config.d_v,
                config.n_tus,
                rng,
            )?);
            if config.decoder_blocks {
                decoder.push(VelocityBlock::new(
                    store,
                    &format!("dec{}", s - 1),
                    ch[s - 1],
                    config.n_vtl,
                    rng,
                )?);
            }
        }
        let head_fc1 = Linear::new(store, "head.fc1", c0, c0, true, rng)?;
        let head_fc2 = Linear::new(store, "head.fc2", c0, config.n_classes, true, rng)?;
        Ok(Self {
            input_fc,
            input_out,
            encoder,
            down,
            up,
            decoder,
            head_fc1,
            head_fc2,
        })
    }
}

/// Model parameters plus the layer wiring derived from the configuration.
#[derive(Clone, Debug)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    arch: Architecture,
}

/// Nodes produced by [`Model::forward_on_tape`].
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// `N × n_classes`.
    pub logits: NodeId,
    /// Point count of every encoder stage.
    pub stage_sizes: Vec<usize>,
}

/// Argmax over each logit row; exact ties resolve to static (0).
pub fn predict_from_logits<T: Real>(logits: &Tensor<T>) -> Vec<u8> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = c;
                }
            }
            best as u8
        })
        .collect()
}

impl<T: Real> Model<T> {
    /// Allocates all parameters: Kaiming-uniform weights, zero biases,
    /// unit LayerNorm gains. Deterministic in `seed`.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let arch = Architecture::build(config, &mut params, &mut rng)?;
        Ok(Self {
            config: config.clone(),
            params,
            arch,
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn input_geometry(scan: &RadarScan) -> Geometry<T> {
        Geometry {
            positions: scan
                .positions
                .iter()
                .map(|p| [T::of(p[0]), T::of(p[1])])
                .collect(),
            velocities: scan.velocities.iter().map(|&v| T::of(v)).collect(),
            rcs: scan.rcs.iter().map(|&v| T::of(v)).collect(),
            origin: (0..scan.len()).collect(),
        }
    }

    /// Per-point input features `(x, y, v, σ)`.
    pub fn input_features(scan: &RadarScan) -> Tensor<T> {
        let data = scan
            .attributes()
            .into_iter()
            .flat_map(|a| a.map(T::of))
            .collect();
        Tensor::from_vec(scan.len(), 4, data).expect("four attributes per point")
    }

    /// Records the full forward pass on `tape` (which must borrow `self.params`).
    pub fn forward_on_tape(&self, tape: &mut Tape<'_, T>, scan: &RadarScan) -> Result<ForwardOutput> {
        scan.validate()?;
        let arch = &self.arch;
        let x = tape.input(Self::input_features(scan));
        let h = arch.input_fc.forward(tape, x)?;
        let h = arch.input_out.forward(tape, h)?;

        let geom = Self::input_geometry(scan);
        let features = arch.encoder[0].forward(tape, h, &geom)?;
        let mut skips = vec![StageState {
            features,
            geometry: geom,
        }];
        for (s, block) in arch.encoder.iter().enumerate().skip(1) {
            let down = arch.down[s - 1].forward(tape, &skips[s - 1])?;
            let features = block.forward(tape, down.features, &down.geometry)?;
            skips.push(StageState {
                features,
                geometry: down.geometry,
            });
        }
        let stage_sizes = skips.iter().map(|s| s.geometry.len()).collect();

        let mut coarse = skips.pop().expect("at least one stage");
        for (i, up) in arch.up.iter().enumerate() {
            let skip = skips.pop().expect("one skip per upsampler");
            let mut features = up.forward(tape, &coarse, &skip)?;
            if let Some(block) = arch.decoder.get(i) {
                features = block.forward(tape, features, &skip.geometry)?;
            }
            coarse = StageState {
                features,
                geometry: skip.geometry,
            };
        }

        let h = arch.head_fc1.forward(tape, coarse.features)?;
        let h = tape.gelu(h);
        let logits = arch.head_fc2.forward(tape, h)?;
        Ok(ForwardOutput { logits, stage_sizes })
    }

    /// Per-point logits, `N × 2`.
    pub fn forward(&self, scan: &RadarScan) -> Result<Tensor<T>> {
        let mut tape = Tape::new(&self.params);
        let out = self.forward_on_tape(&mut tape, scan)?;
        Ok(tape.value(out.logits).clone())
    }

    pub fn predict(&self, scan: &RadarScan) -> Result<Vec<u8>> {
        Ok(predict_from_logits(&self.forward(scan)?))
    }

    pub fn to_checkpoint_bytes(&self) -> Result<Vec<u8>> {
        encode_checkpoint(&self.params, serde_json::to_value(&self.config)?)
    }

    /// Rebuilds a model from an archive. Parameter names and shapes must
    /// match what the embedded configuration produces.
    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let (manifest, stored) = decode_checkpoint::<T>(bytes)?;
        let config: ModelConfig = serde_json::from_value(manifest.config)
            .map_err(|e| Error::Version(format!("checkpoint config: {e}")))?;
        let mut model = Self::build(&config, 0).map_err(|e| Error::Version(e.to_string()))?;
        if stored.len() != model.params.len() {
            return Err(Error::Version(format!(
                "checkpoint holds {} parameters, configuration expects {}",
                stored.len(),
                model.params.len()
            )));
        }
        for (dst, src) in model.params.entries_mut().iter_mut().zip(stored.entries()) {
            if dst.name != src.name || dst.shape != src.shape {
                return Err(Error::Version(format!(
                    "parameter mismatch: checkpoint has {} {:?}, configuration expects {} {:?}",
                    src.name, src.shape, dst.name, dst.shape
                )));
            }
            dst.value = src.value.clone();
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_checkpoint_bytes()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes)
    }
}
