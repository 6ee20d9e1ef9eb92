//! Losses, metrics, the velocity-threshold baseline and the training loop.

mod baseline;
mod bench;
mod diagnostics;
mod loss;
mod metrics;
mod trainer;

pub use baseline::{
    threshold_baseline, threshold_confusion, threshold_grid, tune_threshold, SpeedPool, ThresholdTuning, GRID_STEP,
    GRID_STEPS,
};
pub use bench::{benchmark_latency, LatencyStats, REFERENCE_GPU_MEAN_S, SENSOR_RATE_HZ};
pub use diagnostics::check_loss_gradients;
pub use loss::{combined_loss, lovasz_loss, probabilities, weighted_cross_entropy, LossConfig, LossValue};
pub use metrics::{evaluate, iou_moving, Confusion, EvalReport};
pub use trainer::{scan_gradients, train, train_with_observer, EpochMetrics, TrainConfig, TrainOutcome};
