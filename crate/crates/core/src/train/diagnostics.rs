use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::network::Model;
use crate::numerics::gradcheck::{GradCheckReport, FD_STEP};
use crate::numerics::Tape;
use crate::pointcloud::RadarScan;
use crate::train::loss::{combined_loss, LossConfig};
use crate::train::metrics::truth;

fn loss_value(model: &Model<f64>, scan: &RadarScan, labels: &[u8], loss: &LossConfig) -> Result<f64> {
    let mut tape = Tape::new(&model.params);
    let out = model.forward_on_tape(&mut tape, scan)?;
    Ok(combined_loss(tape.value(out.logits), labels, loss)?.value)
}

/// Compares the backpropagated gradient of the training loss against
/// central differences for up to `per_param` randomly chosen entries of
/// every parameter tensor.
pub fn check_loss_gradients(
    model: &Model<f64>,
    scan: &RadarScan,
    loss: &LossConfig,
    tolerance: f64,
    per_param: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let labels = truth(scan)?;
    let mut tape = Tape::new(&model.params);
    let out = model.forward_on_tape(&mut tape, scan)?;
    let value = combined_loss(tape.value(out.logits), labels, loss)?;
    let grads = tape.backward(out.logits, value.grad)?;
    let mut analytic = vec![None; model.params.len()];
    for (id, g) in grads.param_grads() {
        analytic[id.index()] = Some(g.clone());
    }
    drop(tape);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = model.clone();
    let mut report = GradCheckReport::default();
    for p in 0..model.params.len() {
        let entry = &model.params.entries()[p];
        let len = entry.value.len();
        let name = entry.name.clone();
        for j in sample(&mut rng, len, per_param.min(len)).into_iter() {
            let orig = entry.value.data()[j];
            work.params.entries_mut()[p].value.data_mut()[j] = orig + FD_STEP;
            let plus = loss_value(&work, scan, labels, loss)?;
            work.params.entries_mut()[p].value.data_mut()[j] = orig - FD_STEP;
            let minus = loss_value(&work, scan, labels, loss)?;
            work.params.entries_mut()[p].value.data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic[p].as_ref().map_or(0.0, |g| g.data()[j]);
            report.record(&name, j, a, numeric, tolerance);
        }
    }
    Ok(report)
}
