use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Moment estimates for AdamW, one pair per parameter in store order.
#[derive(Clone, Debug)]
pub struct OptimState<T> {
    pub config: AdamWConfig,
    pub step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Real> OptimState<T> {
    pub fn new(params: &ParamStore<T>, config: AdamWConfig) -> Self {
        let zeros: Vec<Tensor<T>> = params
            .entries()
            .iter()
            .map(|e| Tensor::zeros(e.value.rows(), e.value.cols()))
            .collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }
}

/// One decoupled-weight-decay Adam update with bias correction, then zeroes
/// the gradient buffers. A non-finite gradient aborts before any parameter
/// is touched.
pub fn adamw_step<T: Real>(params: &mut ParamStore<T>, state: &mut OptimState<T>, lr: f64) -> Result<()> {
    if state.first.len() != params.len() {
        return Err(Error::dim(
            "adamw_step",
            format!(
                "optimizer tracks {} parameters, store has {}",
                state.first.len(),
                params.len()
            ),
        ));
    }
    if let Some(bad) = params.entries().iter().find(|e| !e.grad.all_finite()) {
        return Err(Error::NonFinite {
            name: format!("gradient of {}", bad.name),
        });
    }

    state.step += 1;
    let cfg = state.config;
    let t = state.step as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let decay = T::of(lr * cfg.weight_decay);
    let lr_t = T::of(lr);
    let (bc1, bc2, eps) = (T::of(bc1), T::of(bc2), T::of(cfg.eps));

    for (i, entry) in params.entries_mut().iter_mut().enumerate() {
        let m = state.first[i].data_mut();
        let v = state.second[i].data_mut();
        let grads = entry.grad.data();
        for (j, p) in entry.value.data_mut().iter_mut().enumerate() {
            let g = grads[j];
            m[j] = b1 * m[j] + (T::one() - b1) * g;
            v[j] = b2 * v[j] + (T::one() - b2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            *p = *p - decay * *p - lr_t * m_hat / (v_hat.sqrt() + eps);
        }
        if !entry.value.all_finite() {
            return Err(Error::NonFinite {
                name: entry.name.clone(),
            });
        }
    }
    params.zero_grads();
    Ok(())
}

/// Cosine annealing from `lr0` down to `eta_min` over `total_steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr0: f64,
    pub total_steps: usize,
    pub eta_min: f64,
}

pub fn cosine_lr(schedule: &LrSchedule, step: usize) -> Result<f64> {
    if step > schedule.total_steps || schedule.total_steps == 0 {
        return Err(Error::Range {
            step,
            total: schedule.total_steps,
        });
    }
    let frac = step as f64 / schedule.total_steps as f64;
    let lr = schedule.eta_min
        + 0.5 * (schedule.lr0 - schedule.eta_min) * (1.0 + (PI * frac).cos());
    // cos rounding can push the endpoints a hair outside [eta_min, lr0]
    Ok(lr.clamp(schedule.eta_min.min(schedule.lr0), schedule.lr0.max(schedule.eta_min)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(p: f64, g: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        let id = s.insert("p", &[1], vec![p]).unwrap();
        s.accumulate(id, &Tensor::filled(1, 1, g)).unwrap();
        s
    }

    #[test]
    fn zero_grad_no_decay_is_identity() {
        let mut s = scalar_store(1.25, 0.0);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut st = OptimState::new(&s, cfg);
        adamw_step(&mut s, &mut st, 0.1).unwrap();
        assert_eq!(s.entries()[0].value.data(), &[1.25]);
    }

    #[test]
    fn zero_grad_applies_decoupled_decay_exactly() {
        let mut s = scalar_store(2.0, 0.0);
        let cfg = AdamWConfig {
            weight_decay: 0.1,
            ..Default::default()
        };
        let mut st = OptimState::new(&s, cfg);
        adamw_step(&mut s, &mut st, 0.5).unwrap();
        assert_eq!(s.entries()[0].value.data(), &[2.0 - 0.5 * 0.1 * 2.0]);
    }

    #[test]
    fn one_step_matches_hand_formula() {
        // p=0.5, g=1, lr=1e-3, wd=0.01:
        // m = 0.1, v = 0.001, m_hat = 1, v_hat = 1
        // p' = 0.5 - 1e-3*0.01*0.5 - 1e-3 * 1/(1 + 1e-8)
        let expected = 0.5 - 1e-3 * 0.01 * 0.5 - 1e-3 / (1.0 + 1e-8);
        let mut s = scalar_store(0.5, 1.0);
        let mut st = OptimState::new(&s, AdamWConfig::default());
        adamw_step(&mut s, &mut st, 1e-3).unwrap();
        assert!((s.entries()[0].value.data()[0] - expected).abs() < 1e-15);
        assert_eq!(s.entries()[0].grad.data(), &[0.0]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn non_finite_grad_aborts_with_name() {
        let mut s = scalar_store(0.5, f64::NAN);
        let mut st = OptimState::new(&s, AdamWConfig::default());
        let err = adamw_step(&mut s, &mut st, 1e-3).unwrap_err();
        assert!(err.to_string().contains("gradient of p"));
        assert_eq!(s.entries()[0].value.data(), &[0.5]);
        assert_eq!(st.step, 0);
    }

    #[test]
    fn cosine_schedule_points() {
        let s = LrSchedule {
            lr0: 0.0005,
            total_steps: 50,
            eta_min: 0.0,
        };
        assert_eq!(cosine_lr(&s, 0).unwrap(), 0.0005);
        assert!(cosine_lr(&s, 50).unwrap().abs() < 1e-20);
        assert!((cosine_lr(&s, 25).unwrap() - 0.00025).abs() < 1e-18);
        assert!(matches!(cosine_lr(&s, 51), Err(Error::Range { .. })));
        let mut prev = f64::INFINITY;
        for step in 0..=50 {
            let lr = cosine_lr(&s, step).unwrap();
            assert!(lr <= prev && (0.0..=0.0005).contains(&lr));
            prev = lr;
        }
    }
}
