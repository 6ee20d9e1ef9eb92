use rand::RngCore;

use crate::error::Result;
use crate::layers::{relative_differences, Fc, Linear, StageState};
use crate::numerics::{ParamStore, Tape, Tensor};
use crate::real::Real;
use crate::sampling::{fps_keyed, knn_keyed};

/// Number of points kept when halving a stage: `max(1, ⌈n/2⌉)`.
pub fn downsampled_len(n: usize) -> usize {
    n.div_ceil(2).max(1)
}

/// Halves the point count: FPS picks the centers, kNN groups the stage
/// around each, and a channel-wise max pool aggregates the projected
/// features concatenated with neighbor-minus-center position and velocity.
/// Centers keep their original position and velocity.
#[derive(Clone, Debug)]
pub struct Downsample {
    pub proj: Linear,
    pub fc: Fc,
    pub k: usize,
}

impl Downsample {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        din: usize,
        dout: usize,
        k: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        Ok(Self {
            proj: Linear::new(store, &format!("{prefix}.proj"), din, dout, true, rng)?,
            fc: Fc::new(store, &format!("{prefix}.fc"), dout + 3, dout, rng)?,
            k,
        })
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, stage: &StageState<T>) -> Result<StageState<T>> {
        let geom = &stage.geometry;
        let keys = geom.keys();
        let m = downsampled_len(geom.len());
        let centers = fps_keyed(&geom.positions, &keys, m)?;
        let center_geom = geom.select(&centers);
        let nbr = knn_keyed(&center_geom.positions, &geom.positions, &keys, self.k)?;
        let k = nbr.k_effective();

        let projected = self.proj.forward(tape, stage.features)?;
        let grouped = tape.gather(projected, nbr.flat().to_vec())?;
        let rel_p = relative_differences(&center_geom.position_tensor(), &geom.position_tensor(), &nbr)?;
        let rel_v = relative_differences(&center_geom.velocity_tensor(), &geom.velocity_tensor(), &nbr)?;
        let mut rel = Tensor::zeros(rel_p.rows(), 3);
        for r in 0..rel.rows() {
            rel.row_mut(r)[..2].copy_from_slice(rel_p.row(r));
            rel.set(r, 2, rel_v.get(r, 0));
        }
        let rel = tape.input(rel);
        let cat = tape.concat_cols(&[grouped, rel])?;
        let pooled = tape.group_max(cat, k)?;
        let features = self.fc.forward(tape, pooled)?;
        Ok(StageState {
            features,
            geometry: center_geom,
        })
    }
}
