use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Model;
use crate::pointcloud::RadarScan;
use crate::real::Real;

/// Frame rate of the radar sensor; a forward pass faster than one frame
/// period keeps up with the stream.
pub const SENSOR_RATE_HZ: f64 = 17.0;
/// Mean GPU runtime per scan reported for the reference implementation.
pub const REFERENCE_GPU_MEAN_S: f64 = 0.012;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub samples: usize,
    pub mean_s: f64,
    pub median_s: f64,
    pub p95_s: f64,
    pub min_s: f64,
    pub max_s: f64,
}

impl LatencyStats {
    /// Summary of raw per-pass timings. p95 uses the nearest-rank rule.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Argument("no latency samples".into()));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median_s = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Ok(Self {
            samples: n,
            mean_s: sorted.iter().sum::<f64>() / n as f64,
            median_s,
            p95_s: sorted[rank - 1],
            min_s: sorted[0],
            max_s: sorted[n - 1],
        })
    }

    pub fn frame_period_s() -> f64 {
        1.0 / SENSOR_RATE_HZ
    }
}

/// Times `repetitions` sequential forward passes over every scan. One
/// untimed pass over the first scan warms caches first.
pub fn benchmark_latency<T: Real>(model: &Model<T>, scans: &[RadarScan], repetitions: usize) -> Result<LatencyStats> {
    if scans.is_empty() || repetitions == 0 {
        return Err(Error::Argument("benchmark needs at least one scan and one repetition".into()));
    }
    model.forward(&scans[0])?;
    let mut samples = Vec::with_capacity(scans.len() * repetitions);
    for _ in 0..repetitions {
        for scan in scans {
            let start = Instant::now();
            let logits = model.forward(scan)?;
            samples.push(start.elapsed().as_secs_f64());
            std::hint::black_box(logits);
        }
    }
    LatencyStats::from_samples(&samples)
}
