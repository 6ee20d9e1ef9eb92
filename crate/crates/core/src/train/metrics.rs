use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Model;
use crate::pointcloud::{RadarScan, MOVING};
use crate::real::Real;

/// Moving-class confusion counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn from_labels(pred: &[u8], truth: &[u8]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::Argument(format!(
                "{} predictions for {} labels",
                pred.len(),
                truth.len()
            )));
        }
        let mut c = Self::default();
        for (&p, &t) in pred.iter().zip(truth) {
            match (p == MOVING, t == MOVING) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
            tn: self.tn + other.tn,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// `TP / (TP + FN + FP)`, or 1 when there is nothing to get wrong.
    pub fn iou(&self) -> f64 {
        let denom = self.tp + self.fn_ + self.fp;
        if denom == 0 {
            1.0
        } else {
            self.tp as f64 / denom as f64
        }
    }
}

pub fn iou_moving(pred: &[u8], truth: &[u8]) -> Result<f64> {
    Ok(Confusion::from_labels(pred, truth)?.iou())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_moving: f64,
    #[serde(flatten)]
    pub confusion: Confusion,
    pub num_scans: usize,
    /// Wall-clock seconds per forward pass, in scan order.
    pub latencies_s: Vec<f64>,
}

impl EvalReport {
    pub fn from_confusion(confusion: Confusion, latencies_s: Vec<f64>) -> Self {
        Self {
            iou_moving: confusion.iou(),
            confusion,
            num_scans: latencies_s.len(),
            latencies_s,
        }
    }
}

pub(crate) fn truth(scan: &RadarScan) -> Result<&[u8]> {
    scan.labels
        .as_deref()
        .ok_or_else(|| Error::Data(format!("scan {} has no labels", scan.scan_id)))
}

/// Runs the model over every scan in parallel and pools the confusion counts.
pub fn evaluate<T: Real>(model: &Model<T>, scans: &[RadarScan]) -> Result<EvalReport> {
    let per_scan: Vec<(Confusion, f64)> = scans
        .par_iter()
        .map(|scan| {
            let labels = truth(scan)?;
            let start = Instant::now();
            let pred = model.predict(scan)?;
            let elapsed = start.elapsed().as_secs_f64();
            Ok((Confusion::from_labels(&pred, labels)?, elapsed))
        })
        .collect::<Result<_>>()?;
    let confusion = per_scan
        .iter()
        .fold(Confusion::default(), |acc, (c, _)| acc.merge(*c));
    Ok(EvalReport::from_confusion(
        confusion,
        per_scan.into_iter().map(|(_, t)| t).collect(),
    ))
}
