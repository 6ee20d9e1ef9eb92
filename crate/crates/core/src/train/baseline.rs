use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::{RadarScan, MOVING, STATIC};
use crate::train::metrics::{truth, Confusion};

/// Spacing of the threshold search grid, m/s.
pub const GRID_STEP: f64 = 0.01;
/// Number of grid intervals; the grid spans `[0, GRID_STEPS·GRID_STEP]`.
pub const GRID_STEPS: usize = 1000;
const GRID_STEPS_PER_UNIT: f64 = 100.0;

/// Labels a point moving iff `|v| > t`.
pub fn threshold_baseline(scan: &RadarScan, t: f64) -> Vec<u8> {
    scan.velocities
        .iter()
        .map(|v| if v.abs() > t { MOVING } else { STATIC })
        .collect()
}

pub fn threshold_grid() -> Vec<f64> {
    (0..=GRID_STEPS).map(|i| i as f64 / GRID_STEPS_PER_UNIT).collect()
}

/// Absolute velocities of a labeled pool, split by class and sorted.
#[derive(Clone, Debug)]
pub struct SpeedPool {
    moving: Vec<f64>,
    static_: Vec<f64>,
}

impl SpeedPool {
    pub fn new(scans: &[RadarScan]) -> Result<Self> {
        let mut moving = Vec::new();
        let mut static_ = Vec::new();
        for scan in scans {
            for (&v, &l) in scan.velocities.iter().zip(truth(scan)?) {
                if l == MOVING {
                    moving.push(v.abs());
                } else {
                    static_.push(v.abs());
                }
            }
        }
        if moving.is_empty() && static_.is_empty() {
            return Err(Error::Argument("threshold tuning needs at least one point".into()));
        }
        moving.sort_by(f64::total_cmp);
        static_.sort_by(f64::total_cmp);
        Ok(Self { moving, static_ })
    }

    pub fn len(&self) -> usize {
        self.moving.len() + self.static_.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Confusion counts of the rule `|v| > t` on the pool.
    pub fn confusion(&self, t: f64) -> Confusion {
        let above = |xs: &[f64]| (xs.len() - xs.partition_point(|&x| x <= t)) as u64;
        let tp = above(&self.moving);
        let fp = above(&self.static_);
        Confusion {
            tp,
            fp,
            fn_: self.moving.len() as u64 - tp,
            tn: self.static_.len() as u64 - fp,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTuning {
    pub threshold: f64,
    pub iou: f64,
    /// `(t, IoU)` for every grid value.
    pub curve: Vec<(f64, f64)>,
}

impl ThresholdTuning {
    pub fn write_curve_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("threshold,iou\n");
        for (t, iou) in &self.curve {
            out.push_str(&format!("{t:.2},{iou}\n"));
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

/// Grid search for the IoU-maximizing threshold on the pooled scans. The
/// smallest maximizer wins.
pub fn tune_threshold(scans: &[RadarScan]) -> Result<ThresholdTuning> {
    if scans.is_empty() {
        return Err(Error::Argument("threshold tuning on an empty split".into()));
    }
    let pool = SpeedPool::new(scans)?;
    let curve: Vec<(f64, f64)> = threshold_grid()
        .into_iter()
        .map(|t| (t, pool.confusion(t).iou()))
        .collect();
    let (threshold, iou) = curve
        .iter()
        .copied()
        .fold((f64::NAN, f64::NEG_INFINITY), |best, (t, iou)| {
            if iou > best.1 {
                (t, iou)
            } else {
                best
            }
        });
    Ok(ThresholdTuning { threshold, iou, curve })
}

/// Pooled confusion counts of the threshold rule over `scans`.
pub fn threshold_confusion(scans: &[RadarScan], t: f64) -> Result<Confusion> {
    scans.iter().try_fold(Confusion::default(), |acc, scan| {
        Ok(acc.merge(Confusion::from_labels(&threshold_baseline(scan, t), truth(scan)?)?))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scan(v: &[f64], labels: &[u8]) -> RadarScan {
        let n = v.len();
        RadarScan::new(
            "s",
            (0..n).map(|i| [i as f64, 0.0]).collect(),
            v.to_vec(),
            vec![0.0; n],
            Some(labels.to_vec()),
        )
        .unwrap()
    }

    #[test]
    fn threshold_extremes() {
        let s = scan(&[0.0, -0.5, 2.0], &[0, 0, 1]);
        assert_eq!(threshold_baseline(&s, 0.0), vec![0, 1, 1]);
        assert_eq!(threshold_baseline(&s, f64::INFINITY), vec![0, 0, 0]);
    }

    #[test]
    fn all_static_split_picks_first_clean_threshold() {
        // nonzero static speeds: false positives vanish only above 3.0
        let t = tune_threshold(&[scan(&[0.1, 3.0], &[0, 0])]).unwrap();
        assert_eq!((t.threshold, t.iou), (3.0, 1.0));
        let t = tune_threshold(&[scan(&[0.0, 0.0], &[0, 0])]).unwrap();
        assert_eq!((t.threshold, t.iou), (0.0, 1.0));
    }

    #[test]
    fn pool_confusion_matches_direct_count() {
        let s = scan(&[0.3, -1.2, 0.9, 2.5, -0.05], &[0, 1, 0, 1, 1]);
        for t in [0.0, 0.05, 0.3, 0.9, 1.0, 3.0] {
            assert_eq!(
                SpeedPool::new(std::slice::from_ref(&s)).unwrap().confusion(t),
                threshold_confusion(std::slice::from_ref(&s), t).unwrap()
            );
        }
    }

    #[test]
    fn empty_split_is_an_error() {
        assert!(matches!(tune_threshold(&[]), Err(Error::Argument(_))));
    }
}
