use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Model;
use crate::numerics::{adamw_step, cosine_lr, AdamWConfig, LrSchedule, OptimState, ParamId, Tape, Tensor};
use crate::pointcloud::{augment, AugConfig, RadarScan};
use crate::real::Real;
use crate::train::loss::{combined_loss, LossConfig};
use crate::train::metrics::{evaluate, truth};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Scans whose gradients are averaged into one optimizer step.
    pub batch_size: usize,
    pub lr0: f64,
    pub loss: LossConfig,
    pub augment: AugConfig,
    pub adamw: AdamWConfig,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 16,
            lr0: 0.0005,
            loss: LossConfig::default(),
            augment: AugConfig::default(),
            adamw: AdamWConfig::default(),
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.lr0 >= 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config(format!("lr0 must be finite and >= 0, got {}", self.lr0)));
        }
        self.loss.validate()?;
        self.augment.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_iou: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    /// Parameters from the epoch with the highest validation IoU.
    pub best: Model<T>,
    pub best_epoch: usize,
    pub final_model: Model<T>,
    pub metrics: Vec<EpochMetrics>,
}

/// Loss and per-parameter gradients of one scan, in store order.
pub fn scan_gradients<T: Real>(
    model: &Model<T>,
    scan: &RadarScan,
    loss: &LossConfig,
) -> Result<(f64, Vec<Option<Tensor<T>>>)> {
    let labels = truth(scan)?;
    let mut tape = Tape::new(&model.params);
    let out = model.forward_on_tape(&mut tape, scan)?;
    let value = combined_loss(tape.value(out.logits), labels, loss)?;
    if !value.value.is_finite() {
        return Ok((value.value, Vec::new()));
    }
    let grads = tape.backward(out.logits, value.grad)?;
    let mut per_param = vec![None; model.params.len()];
    for (id, g) in grads.param_grads() {
        per_param[id.index()] = Some(g.clone());
    }
    Ok((value.value, per_param))
}

pub fn train<T: Real>(
    model: Model<T>,
    train_scans: &[RadarScan],
    val_scans: &[RadarScan],
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    train_with_observer(model, train_scans, val_scans, config, &mut |_| {})
}

/// Trains for `config.epochs` epochs, calling `observer` after each one.
/// Deterministic in `config.rng_seed`: augmentation seeds are drawn in a
/// fixed order and per-scan gradients are summed in batch order.
pub fn train_with_observer<T: Real>(
    mut model: Model<T>,
    train_scans: &[RadarScan],
    val_scans: &[RadarScan],
    config: &TrainConfig,
    observer: &mut dyn FnMut(&EpochMetrics),
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if train_scans.is_empty() || val_scans.is_empty() {
        return Err(Error::Config("training needs non-empty train and val splits".into()));
    }
    let schedule = LrSchedule {
        lr0: config.lr0,
        total_steps: config.epochs,
        eta_min: 0.0,
    };
    let mut optim = OptimState::new(&model.params, config.adamw);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut metrics = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Model<T>)> = None;

    for epoch in 0..config.epochs {
        let lr = cosine_lr(&schedule, epoch)?;
        let mut order: Vec<usize> = (0..train_scans.len()).collect();
        order.shuffle(&mut rng);
        let aug_seeds: Vec<u64> = order.iter().map(|_| rng.random()).collect();

        let mut loss_sum = 0.0;
        for (batch, seeds) in order.chunks(config.batch_size).zip(aug_seeds.chunks(config.batch_size)) {
            let results: Vec<(f64, Vec<Option<Tensor<T>>>)> = batch
                .par_iter()
                .zip(seeds)
                .map(|(&i, &seed)| {
                    let mut aug_rng = ChaCha8Rng::seed_from_u64(seed);
                    let scan = augment(&train_scans[i], &mut aug_rng, &config.augment)?;
                    scan_gradients(&model, &scan, &config.loss)
                })
                .collect::<Result<_>>()?;
            for (&i, (loss, grads)) in batch.iter().zip(&results) {
                if !loss.is_finite() {
                    return Err(Error::NonFinite {
                        name: format!("loss at epoch {epoch}, scan {}", train_scans[i].scan_id),
                    });
                }
                loss_sum += loss;
                for (id, g) in grads.iter().enumerate() {
                    if let Some(g) = g {
                        model.params.accumulate(ParamId(id), g)?;
                    }
                }
            }
            model.params.scale_grads(T::of(1.0 / batch.len() as f64));
            adamw_step(&mut model.params, &mut optim, lr)?;
        }

        let val_iou = evaluate(&model, val_scans)?.iou_moving;
        let record = EpochMetrics {
            epoch,
            lr,
            train_loss: loss_sum / train_scans.len() as f64,
            val_iou,
        };
        observer(&record);
        metrics.push(record);
        if best.as_ref().is_none_or(|(_, b, _)| val_iou > *b) {
            best = Some((epoch, val_iou, model.clone()));
        }
    }

    let (best_epoch, _, best_model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        best: best_model,
        best_epoch,
        final_model: model,
        metrics,
    })
}
