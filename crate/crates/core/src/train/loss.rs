use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::real::Real;

/// A scalar loss together with its gradient with respect to the logits.
#[derive(Clone, Debug)]
pub struct LossValue<T> {
    pub value: f64,
    pub grad: Tensor<T>,
}

/// Mixing weights and class weights of the training objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// `[static, moving]`.
    pub class_weights: [f64; 2],
    pub lambda_ce: f64,
    pub lambda_lovasz: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            class_weights: [0.5, 8.0],
            lambda_ce: 1.0,
            lambda_lovasz: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.class_weights.iter().all(|w| w.is_finite() && *w > 0.0) {
            return Err(Error::Config(format!(
                "class weights must be positive, got {:?}",
                self.class_weights
            )));
        }
        if !(self.lambda_ce >= 0.0 && self.lambda_lovasz >= 0.0) {
            return Err(Error::Config("loss mixing weights must be non-negative".into()));
        }
        Ok(())
    }
}

fn check_inputs<T: Real>(op: &'static str, logits: &Tensor<T>, labels: &[u8]) -> Result<()> {
    if logits.cols() != 2 || logits.rows() != labels.len() || labels.is_empty() {
        return Err(Error::dim(
            op,
            format!("logits {:?} with {} labels", logits.shape(), labels.len()),
        ));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Argument(format!("{op}: label {bad} is not 0 or 1")));
    }
    Ok(())
}

/// Row-wise two-class softmax in double precision.
pub fn probabilities<T: Real>(logits: &Tensor<T>) -> Vec<[f64; 2]> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            let (a, b) = (row[0].as_f64(), row[1].as_f64());
            let m = a.max(b);
            let (ea, eb) = ((a - m).exp(), (b - m).exp());
            let s = ea + eb;
            [ea / s, eb / s]
        })
        .collect()
}

fn log_softmax(row: [f64; 2]) -> [f64; 2] {
    let m = row[0].max(row[1]);
    let lse = m + ((row[0] - m).exp() + (row[1] - m).exp()).ln();
    [row[0] - lse, row[1] - lse]
}

/// Weighted mean of `−log p(label)`, normalized by the sum of the weights of
/// the labels present.
pub fn weighted_cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[u8], weights: [f64; 2]) -> Result<LossValue<T>> {
    check_inputs("weighted_cross_entropy", logits, labels)?;
    let probs = probabilities(logits);
    let total_w: f64 = labels.iter().map(|&l| weights[l as usize]).sum();
    let mut value = 0.0;
    let mut grad = Tensor::zeros(logits.rows(), 2);
    for (i, &l) in labels.iter().enumerate() {
        let row = logits.row(i);
        let ls = log_softmax([row[0].as_f64(), row[1].as_f64()]);
        let w = weights[l as usize] / total_w;
        value -= w * ls[l as usize];
        for c in 0..2 {
            let target = if c == l as usize { 1.0 } else { 0.0 };
            grad.row_mut(i)[c] = T::of(w * (probs[i][c] - target));
        }
    }
    Ok(LossValue { value, grad })
}

/// Gradient of the Lovász extension of the Jaccard loss, evaluated at the
/// ground truth sorted by decreasing error.
fn lovasz_grad(fg_sorted: &[f64]) -> Vec<f64> {
    let gts: f64 = fg_sorted.iter().sum();
    let mut out = Vec::with_capacity(fg_sorted.len());
    let (mut cum_fg, mut cum_bg) = (0.0, 0.0);
    let mut prev = 0.0;
    for &f in fg_sorted {
        cum_fg += f;
        cum_bg += 1.0 - f;
        let jaccard = 1.0 - (gts - cum_fg) / (gts + cum_bg);
        out.push(jaccard - prev);
        prev = jaccard;
    }
    out
}

/// Lovász-Softmax loss, averaged over the classes that occur in `labels`.
pub fn lovasz_loss<T: Real>(logits: &Tensor<T>, labels: &[u8]) -> Result<LossValue<T>> {
    check_inputs("lovasz_loss", logits, labels)?;
    let n = labels.len();
    let probs = probabilities(logits);
    let present: Vec<usize> = (0..2).filter(|&c| labels.iter().any(|&l| l as usize == c)).collect();

    let mut value = 0.0;
    // d loss / d p_i(c)
    let mut dprob = vec![[0.0f64; 2]; n];
    let scale = 1.0 / present.len() as f64;
    for &c in &present {
        let fg: Vec<f64> = labels.iter().map(|&l| f64::from(l as usize == c)).collect();
        let err: Vec<f64> = (0..n).map(|i| (fg[i] - probs[i][c]).abs()).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| err[b].partial_cmp(&err[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
        let fg_sorted: Vec<f64> = order.iter().map(|&i| fg[i]).collect();
        let g = lovasz_grad(&fg_sorted);
        for (rank, &i) in order.iter().enumerate() {
            value += scale * err[i] * g[rank];
            // err = 1 − p on foreground, p elsewhere
            let sign = if fg[i] > 0.5 { -1.0 } else { 1.0 };
            dprob[i][c] += scale * g[rank] * sign;
        }
    }

    let mut grad = Tensor::zeros(n, 2);
    for i in 0..n {
        let p = probs[i];
        let dot = dprob[i][0] * p[0] + dprob[i][1] * p[1];
        for c in 0..2 {
            grad.row_mut(i)[c] = T::of(p[c] * (dprob[i][c] - dot));
        }
    }
    Ok(LossValue { value, grad })
}

/// `λ_ce · WCE + λ_lov · Lovász`.
pub fn combined_loss<T: Real>(logits: &Tensor<T>, labels: &[u8], config: &LossConfig) -> Result<LossValue<T>> {
    let ce = weighted_cross_entropy(logits, labels, config.class_weights)?;
    let lov = lovasz_loss(logits, labels)?;
    let mut grad = ce.grad;
    grad.scale(T::of(config.lambda_ce));
    let mut lg = lov.grad;
    lg.scale(T::of(config.lambda_lovasz));
    grad.add_assign(&lg)?;
    Ok(LossValue {
        value: config.lambda_ce * ce.value + config.lambda_lovasz * lov.value,
        grad,
    })
}
