use rand::RngCore;

use crate::error::{Error, Result};
use crate::layers::{EncodingMlp, Geometry, Linear};
use crate::numerics::{NodeId, ParamStore, Tape, Tensor};
use crate::real::Real;
use crate::sampling::{knn_keyed, NeighborhoodIndex};

/// `out[j·k + i] = refs[nbr(j)[i]] − query[j]`: neighbor minus query.
pub fn relative_differences<T: Real>(
    query: &Tensor<T>,
    refs: &Tensor<T>,
    nbr: &NeighborhoodIndex,
) -> Result<Tensor<T>> {
    if query.cols() != refs.cols() || query.rows() != nbr.num_queries() {
        return Err(Error::dim(
            "relative_differences",
            format!(
                "query {:?}, refs {:?}, {} neighborhoods",
                query.shape(),
                refs.shape(),
                nbr.num_queries()
            ),
        ));
    }
    let k = nbr.k_effective();
    let mut out = Tensor::zeros(query.rows() * k, query.cols());
    for (j, row) in nbr.rows().enumerate() {
        let q = query.row(j);
        for (i, &r) in row.iter().enumerate() {
            if r >= refs.rows() {
                return Err(Error::dim("relative_differences", format!("index {r} out of range")));
            }
            for ((o, &a), &b) in out.row_mut(j * k + i).iter_mut().zip(refs.row(r)).zip(q) {
                *o = a - b;
            }
        }
    }
    Ok(out)
}

/// Encodes neighbor-minus-query attribute differences through `mlp`.
/// `attrs_neighbor` is grouped, `(M·k)×A`.
pub fn relative_encoding<T: Real>(
    tape: &mut Tape<'_, T>,
    attrs_query: &Tensor<T>,
    attrs_neighbor: &Tensor<T>,
    mlp: &EncodingMlp,
) -> Result<NodeId> {
    let m = attrs_query.rows();
    if m == 0 || attrs_neighbor.rows() % m != 0 || attrs_neighbor.cols() != attrs_query.cols() {
        return Err(Error::dim(
            "relative_encoding",
            format!(
                "query {:?} vs grouped neighbors {:?}",
                attrs_query.shape(),
                attrs_neighbor.shape()
            ),
        ));
    }
    if attrs_query.cols() != mlp.fc1.din {
        return Err(Error::dim(
            "relative_encoding",
            format!(
                "{} attributes for an encoder expecting {}",
                attrs_query.cols(),
                mlp.fc1.din
            ),
        ));
    }
    let k = attrs_neighbor.rows() / m;
    let mut diff = attrs_neighbor.clone();
    for r in 0..diff.rows() {
        let q = attrs_query.row(r / k);
        for (d, &qv) in diff.row_mut(r).iter_mut().zip(q) {
            *d -= qv;
        }
    }
    let x = tape.input(diff);
    mlp.forward(tape, x)
}

/// Vector self-attention over kNN neighborhoods with relative position and
/// velocity encodings added to both the attention logits and the values.
///
/// For query `j` and neighbor `i`:
///
/// ```text
/// logits_ij = (q_j − k_i) + δp_ij + δv_ij          (per channel)
/// a_ij      = softmax_i(logits_ij)                  (per channel)
/// y_j       = Σ_i a_ij ⊙ (v_i + δp_ij + δv_ij)
/// ```
///
/// There is no output projection; the enclosing block consumes `y`.
#[derive(Clone, Debug)]
pub struct VelocityAttention {
    pub w_q: Linear,
    pub w_k: Linear,
    pub w_v: Linear,
    pub pos_enc: EncodingMlp,
    pub vel_enc: EncodingMlp,
    pub k: usize,
}

impl VelocityAttention {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        dim: usize,
        k: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        Ok(Self {
            w_q: Linear::new(store, &format!("{prefix}.w_q"), dim, dim, false, rng)?,
            w_k: Linear::new(store, &format!("{prefix}.w_k"), dim, dim, false, rng)?,
            w_v: Linear::new(store, &format!("{prefix}.w_v"), dim, dim, false, rng)?,
            pos_enc: EncodingMlp::new(store, &format!("{prefix}.pos_enc"), 2, dim, dim, rng)?,
            vel_enc: EncodingMlp::new(store, &format!("{prefix}.vel_enc"), 1, dim, dim, rng)?,
            k,
        })
    }

    pub fn neighborhoods<T: Real>(&self, geom: &Geometry<T>) -> Result<NeighborhoodIndex> {
        knn_keyed(&geom.positions, &geom.positions, &geom.keys(), self.k)
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, x: NodeId, geom: &Geometry<T>) -> Result<NodeId> {
        let nbr = self.neighborhoods(geom)?;
        self.forward_with(tape, x, geom, &nbr)
    }

    /// Forward pass over precomputed neighborhoods.
    pub fn forward_with<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        x: NodeId,
        geom: &Geometry<T>,
        nbr: &NeighborhoodIndex,
    ) -> Result<NodeId> {
        let k = nbr.k_effective();
        let q = self.w_q.forward(tape, x)?;
        let key = self.w_k.forward(tape, x)?;
        let val = self.w_v.forward(tape, x)?;

        let q_rep = tape.gather(q, nbr.query_repeat())?;
        let k_grp = tape.gather(key, nbr.flat().to_vec())?;
        let v_grp = tape.gather(val, nbr.flat().to_vec())?;

        let pos = geom.position_tensor();
        let vel = geom.velocity_tensor();
        let rel_p = relative_differences(&pos, &pos, nbr)?;
        let rel_v = relative_differences(&vel, &vel, nbr)?;
        let rel_p = tape.input(rel_p);
        let rel_v = tape.input(rel_v);
        let dp = self.pos_enc.forward(tape, rel_p)?;
        let dv = self.vel_enc.forward(tape, rel_v)?;
        let enc = tape.add(dp, dv)?;

        let rel = tape.sub(q_rep, k_grp)?;
        let logits = tape.add(rel, enc)?;
        let attn = tape.group_softmax(logits, k)?;
        let values = tape.add(v_grp, enc)?;
        let weighted = tape.mul(attn, values)?;
        tape.group_sum(weighted, k)
    }
}
