//! Central finite-difference gradient verification.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numerics::{NodeId, ParamStore, Tape, Tensor};

/// Step used for the central differences.
pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared absolutely rather than relatively.
pub const REL_ERR_FLOOR: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct GradMismatch {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    pub failures: Vec<GradMismatch>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub(crate) fn record(&mut self, name: &str, index: usize, analytic: f64, numeric: f64, tol: f64) {
        let rel = rel_err(analytic, numeric);
        self.checked += 1;
        self.max_rel_err = self.max_rel_err.max(rel);
        if rel >= tol || !rel.is_finite() {
            self.failures.push(GradMismatch {
                name: name.to_string(),
                index,
                analytic,
                numeric,
                rel_err: rel,
            });
        }
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERR_FLOOR)
}

/// A differentiable fragment: records its computation on `tape` from the
/// given input leaves and returns the output node.
pub trait Fragment {
    fn eval(&self, tape: &mut Tape<'_, f64>, inputs: &[NodeId]) -> Result<NodeId>;
}

impl<F> Fragment for F
where
    F: Fn(&mut Tape<'_, f64>, &[NodeId]) -> Result<NodeId>,
{
    fn eval(&self, tape: &mut Tape<'_, f64>, inputs: &[NodeId]) -> Result<NodeId> {
        self(tape, inputs)
    }
}

/// Scalar objective `L = Σ w ⊙ fragment(...)` with a fixed random projection
/// `w`, so every output entry contributes a distinct weight.
fn objective(
    fragment: &dyn Fragment,
    params: &ParamStore<f64>,
    inputs: &[Tensor<f64>],
    proj: &Tensor<f64>,
) -> Result<f64> {
    let mut tape = Tape::new(params);
    let ids: Vec<_> = inputs.iter().map(|x| tape.input(x.clone())).collect();
    let out = fragment.eval(&mut tape, &ids)?;
    Ok(tape
        .value(out)
        .data()
        .iter()
        .zip(proj.data())
        .map(|(a, b)| a * b)
        .sum())
}

/// Compares analytic gradients of every parameter in `params` and every
/// tensor in `inputs` against central differences. Failures are report
/// entries, never errors; `Err` only signals that the fragment itself failed.
pub fn grad_check(
    fragment: &dyn Fragment,
    params: &ParamStore<f64>,
    inputs: &[Tensor<f64>],
    tolerance: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut tape = Tape::new(params);
    let ids: Vec<_> = inputs.iter().map(|x| tape.input(x.clone())).collect();
    let out = fragment.eval(&mut tape, &ids)?;
    let (r, c) = tape.value(out).shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let proj = Tensor::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let grads = tape.backward(out, proj.clone())?;

    let mut analytic_params: Vec<Tensor<f64>> = params
        .entries()
        .iter()
        .map(|e| Tensor::zeros(e.value.rows(), e.value.cols()))
        .collect();
    for (pid, g) in grads.param_grads() {
        analytic_params[pid.index()] = g.clone();
    }
    let analytic_inputs: Vec<Tensor<f64>> = ids
        .iter()
        .zip(inputs)
        .map(|(&id, x)| {
            grads
                .of(id)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(x.rows(), x.cols()))
        })
        .collect();
    drop(tape);

    let mut report = GradCheckReport::default();
    let mut work = params.clone();
    for p in 0..params.len() {
        let name = params.entries()[p].name.clone();
        for j in 0..params.entries()[p].value.len() {
            let orig = work.entries()[p].value.data()[j];
            work.entries_mut()[p].value.data_mut()[j] = orig + FD_STEP;
            let plus = objective(fragment, &work, inputs, &proj)?;
            work.entries_mut()[p].value.data_mut()[j] = orig - FD_STEP;
            let minus = objective(fragment, &work, inputs, &proj)?;
            work.entries_mut()[p].value.data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            report.record(&name, j, analytic_params[p].data()[j], numeric, tolerance);
        }
    }

    let mut shifted = inputs.to_vec();
    for (i, x) in inputs.iter().enumerate() {
        let name = format!("input[{i}]");
        for j in 0..x.len() {
            let orig = x.data()[j];
            shifted[i].data_mut()[j] = orig + FD_STEP;
            let plus = objective(fragment, params, &shifted, &proj)?;
            shifted[i].data_mut()[j] = orig - FD_STEP;
            let minus = objective(fragment, params, &shifted, &proj)?;
            shifted[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            report.record(&name, j, analytic_inputs[i].data()[j], numeric, tolerance);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn linear_fragment_passes_tight_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let w = store.insert("w", &[4, 3], random(4, 3, &mut rng)).unwrap();
        let b = store.insert("b", &[3], random(1, 3, &mut rng)).unwrap();
        let x = Tensor::from_vec(3, 4, random(3, 4, &mut rng)).unwrap();
        let frag = move |t: &mut Tape<'_, f64>, ins: &[NodeId]| {
            let wn = t.param(w);
            let bn = t.param(b);
            let y = t.matmul(ins[0], wn)?;
            t.add_row(y, bn)
        };
        let report = grad_check(&frag, &store, &[x], 1e-6, 11).unwrap();
        assert!(report.passed(), "{:?}", report.failures);
        assert_eq!(report.checked, 12 + 3 + 12);
        assert!(report.max_rel_err < 1e-6);
    }

    #[test]
    fn constant_fragment_has_zero_gradients() {
        let mut store = ParamStore::new();
        store.insert("unused", &[2], vec![0.3, -0.7]).unwrap();
        let frag = |t: &mut Tape<'_, f64>, _: &[NodeId]| {
            Ok(t.input(Tensor::filled(2, 2, 4.0)))
        };
        let x = Tensor::filled(1, 3, 1.0);
        let report = grad_check(&frag, &store, &[x], 1e-6, 0).unwrap();
        assert!(report.passed());
        assert_eq!(report.max_rel_err, 0.0);
    }

    #[test]
    fn mismatch_is_reported_by_name() {
        let mut report = GradCheckReport::default();
        report.record("w", 3, 1.0, 1.0 + 1e-9, 1e-6);
        report.record("b", 0, 0.5, 0.7, 1e-6);
        assert_eq!(report.checked, 2);
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].name, "b");
        assert!((report.max_rel_err - 0.2 / 0.7).abs() < 1e-12);
    }
}
