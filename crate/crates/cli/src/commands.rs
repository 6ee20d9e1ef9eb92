use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use velo_attn_core::pointcloud::{
    load_scan, save_scan_with_predictions, synth_scene_indexed, write_dataset, Dataset, Split, SynthConfig,
};
use velo_attn_core::train::{
    benchmark_latency, evaluate, threshold_confusion, train_with_observer, tune_threshold, EvalReport, LatencyStats,
    REFERENCE_GPU_MEAN_S, SENSOR_RATE_HZ,
};
use velo_attn_core::{Error, Model, Precision, RadarScan, Real, Result};

use crate::config::{write_json, Preset, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "velo-attn", version, about = "Moving/static segmentation of sparse radar scans")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// JSON run configuration; missing fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Dataset directory (scan CSVs plus split.json).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Floating-point precision: single or double.
    #[arg(long, global = true, env = Precision::ENV_VAR)]
    pub precision: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled dataset.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        n_val: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
        #[arg(long)]
        clutter_fraction: Option<f64>,
    },
    /// Train a model and keep the checkpoint with the best validation IoU.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Scans per optimizer step.
        #[arg(long)]
        batch: Option<usize>,
        /// Seed for shuffling and augmentation.
        #[arg(long)]
        seed: Option<u64>,
        /// Seed for parameter initialization.
        #[arg(long)]
        model_seed: Option<u64>,
        /// Where to write the best checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Pooled moving-class IoU of a checkpoint on one split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Tune the velocity threshold on one split and apply it to another.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "val")]
        tune_split: Split,
        #[arg(long, default_value = "test")]
        eval_split: Split,
    },
    /// Label one scan CSV, appending a `pred` column.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Time forward passes over a dataset split or freshly synthesized scans.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Benchmark this split of --data instead of synthesizing scans.
        #[arg(long)]
        split: Option<Split>,
        #[arg(long, default_value_t = 1000)]
        n_scans: usize,
        /// Approximate points per synthesized scan.
        #[arg(long, default_value_t = 300)]
        points: usize,
        #[arg(long, default_value_t = 1)]
        repetitions: usize,
    },
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Range { .. } => 2,
        Error::Parse { .. } | Error::Data(_) | Error::Mapping(_) | Error::Version(_) => 3,
        Error::NonFinite { .. } => 4,
        Error::Dimension { .. } | Error::Argument(_) | Error::Io { .. } | Error::Json(_) => 1,
    }
}

fn resolve(common: &Common) -> Result<(RunConfig, Precision)> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(p) = common.preset {
        cfg.apply_preset(p);
    }
    if let Some(dir) = &common.out_dir {
        cfg.out_dir = dir.clone();
    }
    if let Some(dir) = &common.data {
        cfg.dataset_dir = Some(dir.clone());
    }
    let precision = match &common.precision {
        Some(p) => p.parse()?,
        None => Precision::Single,
    };
    Ok((cfg, precision))
}

fn emit<S: Serialize>(value: &S) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            common,
            seed,
            n_train,
            n_val,
            n_test,
            clutter_fraction,
        } => {
            let (mut cfg, _) = resolve(&common)?;
            if let Some(s) = seed {
                cfg.synth.rng_seed = s;
            }
            cfg.n_train = n_train.unwrap_or(cfg.n_train);
            cfg.n_val = n_val.unwrap_or(cfg.n_val);
            cfg.n_test = n_test.unwrap_or(cfg.n_test);
            if let Some(c) = clutter_fraction {
                cfg.synth.clutter_fraction = c;
            }
            cfg.validate()?;
            cfg.echo("synth")?;
            let summary = cmd_synth(&cfg)?;
            write_json(&cfg.out_dir.join("synth_summary.json"), &summary)?;
            emit(&summary)
        }
        Command::Train {
            common,
            epochs,
            lr,
            batch,
            seed,
            model_seed,
            checkpoint,
        } => {
            let (mut cfg, precision) = resolve(&common)?;
            cfg.train.epochs = epochs.unwrap_or(cfg.train.epochs);
            cfg.train.lr0 = lr.unwrap_or(cfg.train.lr0);
            cfg.train.batch_size = batch.unwrap_or(cfg.train.batch_size);
            cfg.train.rng_seed = seed.unwrap_or(cfg.train.rng_seed);
            cfg.model_seed = model_seed.unwrap_or(cfg.model_seed);
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint;
            }
            cfg.validate()?;
            cfg.echo("train")?;
            let summary = match precision {
                Precision::Single => cmd_train::<f32>(&cfg)?,
                Precision::Double => cmd_train::<f64>(&cfg)?,
            };
            emit(&summary)
        }
        Command::Eval {
            common,
            checkpoint,
            split,
        } => {
            let (mut cfg, precision) = resolve(&common)?;
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint;
            }
            cfg.echo("eval")?;
            let report = match precision {
                Precision::Single => cmd_eval::<f32>(&cfg, split)?,
                Precision::Double => cmd_eval::<f64>(&cfg, split)?,
            };
            write_json(&cfg.out_dir.join(format!("eval_{split}.json")), &report)?;
            eprintln!(
                "{split}: IoU {:.4} (TP {}, FP {}, FN {}, TN {})",
                report.iou_moving, report.confusion.tp, report.confusion.fp, report.confusion.fn_, report.confusion.tn
            );
            emit(&EvalSummary::from(&report))
        }
        Command::Baseline {
            common,
            tune_split,
            eval_split,
        } => {
            let (cfg, _) = resolve(&common)?;
            cfg.echo("baseline")?;
            let report = cmd_baseline(&cfg, tune_split, eval_split)?;
            write_json(&cfg.out_dir.join("baseline.json"), &report)?;
            emit(&report)
        }
        Command::Infer {
            common,
            checkpoint,
            input,
            output,
        } => {
            let (mut cfg, precision) = resolve(&common)?;
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint;
            }
            let output = output.unwrap_or_else(|| {
                let stem = input.file_stem().map_or("scan".into(), |s| s.to_string_lossy().into_owned());
                cfg.out_dir.join(format!("{stem}.pred.csv"))
            });
            let moving = match precision {
                Precision::Single => cmd_infer::<f32>(&cfg, &input, &output)?,
                Precision::Double => cmd_infer::<f64>(&cfg, &input, &output)?,
            };
            eprintln!("{}: {moving} moving points", output.display());
            Ok(())
        }
        Command::Bench {
            common,
            checkpoint,
            split,
            n_scans,
            points,
            repetitions,
        } => {
            let (mut cfg, precision) = resolve(&common)?;
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint;
            }
            cfg.echo("bench")?;
            let scans = match split {
                Some(s) => Dataset::open(&cfg.dataset_dir())?.load_split(s)?,
                None => bench_scans(&cfg.synth, n_scans, points)?,
            };
            let report = match precision {
                Precision::Single => cmd_bench::<f32>(&cfg, &scans, repetitions)?,
                Precision::Double => cmd_bench::<f64>(&cfg, &scans, repetitions)?,
            };
            write_json(&cfg.out_dir.join("bench.json"), &report)?;
            println!("{}", report.reference_line());
            emit(&report)
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LabelCounts {
    pub scans: usize,
    pub points: usize,
    pub moving: usize,
    #[serde(rename = "static")]
    pub static_: usize,
}

impl LabelCounts {
    pub fn add(&mut self, scan: &RadarScan) {
        let moving = scan.moving_count();
        self.scans += 1;
        self.points += scan.len();
        self.moving += moving;
        self.static_ += scan.len() - moving;
    }
}

/// Writes the synthetic dataset and returns its label histogram per split.
pub fn cmd_synth(cfg: &RunConfig) -> Result<BTreeMap<String, LabelCounts>> {
    let mut scans = Vec::with_capacity(cfg.n_train + cfg.n_val + cfg.n_test);
    let mut index = 0u64;
    for (split, n) in [(Split::Train, cfg.n_train), (Split::Val, cfg.n_val), (Split::Test, cfg.n_test)] {
        for _ in 0..n {
            scans.push((synth_scene_indexed(&cfg.synth, index)?, split));
            index += 1;
        }
    }
    let dir = cfg.dataset_dir();
    write_dataset(&dir, &scans)?;
    let mut hist: BTreeMap<String, LabelCounts> = BTreeMap::new();
    for (scan, split) in &scans {
        hist.entry(split.to_string()).or_default().add(scan);
    }
    eprintln!("wrote {} scans to {}", scans.len(), dir.display());
    Ok(hist)
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub best_epoch: usize,
    pub best_val_iou: f64,
    pub final_train_loss: f64,
    pub num_parameters: usize,
}

pub fn cmd_train<T: Real>(cfg: &RunConfig) -> Result<TrainSummary> {
    let data = Dataset::open(&cfg.dataset_dir())?;
    let train_scans = data.load_split(Split::Train)?;
    let val_scans = data.load_split(Split::Val)?;
    if train_scans.is_empty() || val_scans.is_empty() {
        return Err(Error::Config(format!(
            "{} needs non-empty train and val splits",
            data.root.display()
        )));
    }
    let model = Model::<T>::build(&cfg.model, cfg.model_seed)?;
    let metrics_path = cfg.out_dir.join("metrics.jsonl");
    let mut metrics = File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    let mut write_err = None;
    let outcome = train_with_observer(model, &train_scans, &val_scans, &cfg.train, &mut |m| {
        eprintln!(
            "epoch {:>3}  lr {:.3e}  loss {:.5}  val IoU {:.4}",
            m.epoch, m.lr, m.train_loss, m.val_iou
        );
        let line = serde_json::to_string(m).expect("metrics serialize");
        if let Err(e) = writeln!(metrics, "{line}") {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(Error::io(&metrics_path, e));
    }
    let checkpoint = cfg.checkpoint();
    if let Some(parent) = checkpoint.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    outcome.best.save(&checkpoint)?;
    let summary = TrainSummary {
        checkpoint,
        best_epoch: outcome.best_epoch,
        best_val_iou: outcome.metrics[outcome.best_epoch].val_iou,
        final_train_loss: outcome.metrics.last().map_or(f64::NAN, |m| m.train_loss),
        num_parameters: outcome.best.num_parameters(),
    };
    write_json(&cfg.out_dir.join("train_summary.json"), &summary)?;
    Ok(summary)
}

/// Report without per-scan latencies, for the terminal.
#[derive(Clone, Debug, Serialize)]
pub struct EvalSummary {
    pub iou_moving: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub num_scans: usize,
}

impl From<&EvalReport> for EvalSummary {
    fn from(r: &EvalReport) -> Self {
        Self {
            iou_moving: r.iou_moving,
            tp: r.confusion.tp,
            fp: r.confusion.fp,
            fn_: r.confusion.fn_,
            tn: r.confusion.tn,
            num_scans: r.num_scans,
        }
    }
}

pub fn cmd_eval<T: Real>(cfg: &RunConfig, split: Split) -> Result<EvalReport> {
    let model = Model::<T>::load(&cfg.checkpoint())?;
    let scans = Dataset::open(&cfg.dataset_dir())?.load_split(split)?;
    if scans.is_empty() {
        return Err(Error::Config(format!("split {split} is empty")));
    }
    evaluate(&model, &scans)
}

#[derive(Clone, Debug, Serialize)]
pub struct BaselineReport {
    pub threshold: f64,
    pub tune_split: String,
    pub tune_iou: f64,
    pub eval_split: String,
    pub eval: EvalSummary,
}

pub fn cmd_baseline(cfg: &RunConfig, tune_split: Split, eval_split: Split) -> Result<BaselineReport> {
    let data = Dataset::open(&cfg.dataset_dir())?;
    let tune = data.load_split(tune_split)?;
    let eval = data.load_split(eval_split)?;
    if tune.is_empty() || eval.is_empty() {
        return Err(Error::Config("baseline needs non-empty tuning and evaluation splits".into()));
    }
    let tuned = tune_threshold(&tune)?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    tuned.write_curve_csv(&cfg.out_dir.join("threshold_curve.csv"))?;
    let confusion = threshold_confusion(&eval, tuned.threshold)?;
    let report = EvalReport::from_confusion(confusion, Vec::new());
    Ok(BaselineReport {
        threshold: tuned.threshold,
        tune_split: tune_split.to_string(),
        tune_iou: tuned.iou,
        eval_split: eval_split.to_string(),
        eval: EvalSummary {
            num_scans: eval.len(),
            ..EvalSummary::from(&report)
        },
    })
}

/// Returns the number of points labeled moving.
pub fn cmd_infer<T: Real>(cfg: &RunConfig, input: &Path, output: &Path) -> Result<usize> {
    let model = Model::<T>::load(&cfg.checkpoint())?;
    let scan = load_scan(input)?;
    let pred = model.predict(&scan)?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    save_scan_with_predictions(&scan, &pred, output)?;
    Ok(pred.iter().filter(|&&p| p == 1).count())
}

/// Synthetic scans of roughly `points` detections each.
pub fn bench_scans(base: &SynthConfig, n: usize, points: usize) -> Result<Vec<RadarScan>> {
    // about two dozen moving detections on average
    let static_hi = points.saturating_sub(5).max(1);
    let cfg = SynthConfig {
        n_static_range: [points.saturating_sub(45).clamp(1, static_hi), static_hi],
        ..base.clone()
    };
    (0..n as u64).map(|i| synth_scene_indexed(&cfg, i)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub num_scans: usize,
    pub mean_points: f64,
    pub precision: String,
    pub latency: LatencyStats,
    pub sensor_rate_hz: f64,
    pub frame_period_s: f64,
    pub reference_gpu_mean_s: f64,
}

impl BenchReport {
    pub fn reference_line(&self) -> String {
        format!(
            "real-time reference: {:.0} Hz sensor rate, {:.4} s per scan; measured mean {:.4} s, median {:.4} s, p95 {:.4} s (reference GPU mean {:.3} s)",
            self.sensor_rate_hz,
            self.frame_period_s,
            self.latency.mean_s,
            self.latency.median_s,
            self.latency.p95_s,
            self.reference_gpu_mean_s
        )
    }
}

pub fn cmd_bench<T: Real>(cfg: &RunConfig, scans: &[RadarScan], repetitions: usize) -> Result<BenchReport> {
    let model = Model::<T>::load(&cfg.checkpoint())?;
    let latency = benchmark_latency(&model, scans, repetitions)?;
    Ok(BenchReport {
        num_scans: scans.len(),
        mean_points: scans.iter().map(RadarScan::len).sum::<usize>() as f64 / scans.len().max(1) as f64,
        precision: T::DTYPE.to_string(),
        latency,
        sensor_rate_hz: SENSOR_RATE_HZ,
        frame_period_s: LatencyStats::frame_period_s(),
        reference_gpu_mean_s: REFERENCE_GPU_MEAN_S,
    })
}
