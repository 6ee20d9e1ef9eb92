use rand::RngCore;

use crate::error::{Error, Result};
use crate::layers::{relative_differences, EncodingMlp, Linear, StageState};
use crate::numerics::{NodeId, ParamStore, Tape};
use crate::real::Real;
use crate::sampling::{knn_keyed, NeighborhoodIndex};

/// Cross-attention from the skip-connection points (queries) onto the
/// coarser stage (keys and values).
///
/// Three separate per-channel softmaxes over the neighborhood weight the
/// query-key relation, the position encoding and the velocity encoding.
/// The weights are concatenated to `D + d_p + d_v` channels and applied to
/// the concatenated values `(v_i, δp_ij, δv_ij)`; the sum is compressed back
/// to `D` by `W_y` and added to the skip features.
#[derive(Clone, Debug)]
pub struct TransformerUpsample {
    pub w_q: Linear,
    pub w_k: Linear,
    pub w_v: Linear,
    pub pos_enc: EncodingMlp,
    pub vel_enc: EncodingMlp,
    pub w_y: Linear,
    pub k: usize,
}

impl TransformerUpsample {
    /// `coarse_dim → skip_dim`, with encodings of width `d_p` and `d_v`.
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        coarse_dim: usize,
        skip_dim: usize,
        d_p: usize,
        d_v: usize,
        k: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        Ok(Self {
            w_q: Linear::new(store, &format!("{prefix}.w_q"), skip_dim, skip_dim, false, rng)?,
            w_k: Linear::new(store, &format!("{prefix}.w_k"), coarse_dim, skip_dim, false, rng)?,
            w_v: Linear::new(store, &format!("{prefix}.w_v"), coarse_dim, skip_dim, false, rng)?,
            pos_enc: EncodingMlp::new(store, &format!("{prefix}.pos_enc"), 2, d_p, d_p, rng)?,
            vel_enc: EncodingMlp::new(store, &format!("{prefix}.vel_enc"), 1, d_v, d_v, rng)?,
            w_y: Linear::new(store, &format!("{prefix}.w_y"), skip_dim + d_p + d_v, skip_dim, false, rng)?,
            k,
        })
    }

    pub fn neighborhoods<T: Real>(&self, coarse: &StageState<T>, skip: &StageState<T>) -> Result<NeighborhoodIndex> {
        let (nc, ns) = (coarse.geometry.len(), skip.geometry.len());
        if nc > ns {
            return Err(Error::Argument(format!(
                "upsampling needs coarse <= skip points, got {nc} > {ns}"
            )));
        }
        knn_keyed(
            &skip.geometry.positions,
            &coarse.geometry.positions,
            &coarse.geometry.keys(),
            self.k,
        )
    }

    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        coarse: &StageState<T>,
        skip: &StageState<T>,
    ) -> Result<NodeId> {
        let nbr = self.neighborhoods(coarse, skip)?;
        let k = nbr.k_effective();

        let q = self.w_q.forward(tape, skip.features)?;
        let key = self.w_k.forward(tape, coarse.features)?;
        let val = self.w_v.forward(tape, coarse.features)?;
        let q_rep = tape.gather(q, nbr.query_repeat())?;
        let k_grp = tape.gather(key, nbr.flat().to_vec())?;
        let v_grp = tape.gather(val, nbr.flat().to_vec())?;

        let (cg, sg) = (&coarse.geometry, &skip.geometry);
        let rel_p = relative_differences(&sg.position_tensor(), &cg.position_tensor(), &nbr)?;
        let rel_v = relative_differences(&sg.velocity_tensor(), &cg.velocity_tensor(), &nbr)?;
        let rel_p = tape.input(rel_p);
        let rel_v = tape.input(rel_v);
        let dp = self.pos_enc.forward(tape, rel_p)?;
        let dv = self.vel_enc.forward(tape, rel_v)?;

        let qk = tape.sub(q_rep, k_grp)?;
        let a_qk = tape.group_softmax(qk, k)?;
        let a_p = tape.group_softmax(dp, k)?;
        let a_v = tape.group_softmax(dv, k)?;
        let attn = tape.concat_cols(&[a_qk, a_p, a_v])?;
        let values = tape.concat_cols(&[v_grp, dp, dv])?;
        let weighted = tape.mul(attn, values)?;
        let y = tape.group_sum(weighted, k)?;
        let z = self.w_y.forward(tape, y)?;
        tape.add(skip.features, z)
    }
}
