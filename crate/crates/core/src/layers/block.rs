use rand::RngCore;

use crate::error::Result;
use crate::layers::{Fc, Geometry, VelocityAttention};
use crate::numerics::{NodeId, ParamStore, Tape};
use crate::real::Real;

/// Residual block `x + FC2(attention(FC1(x)))`, each FC being
/// linear → LayerNorm → GELU at the stage width.
#[derive(Clone, Debug)]
pub struct VelocityBlock {
    pub fc1: Fc,
    pub attn: VelocityAttention,
    pub fc2: Fc,
}

impl VelocityBlock {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        dim: usize,
        k: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        Ok(Self {
            fc1: Fc::new(store, &format!("{prefix}.fc1"), dim, dim, rng)?,
            attn: VelocityAttention::new(store, &format!("{prefix}.attn"), dim, k, rng)?,
            fc2: Fc::new(store, &format!("{prefix}.fc2"), dim, dim, rng)?,
        })
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, x: NodeId, geom: &Geometry<T>) -> Result<NodeId> {
        let h = self.fc1.forward(tape, x)?;
        let h = self.attn.forward(tape, h, geom)?;
        let h = self.fc2.forward(tape, h)?;
        tape.add(x, h)
    }
}
