//! Network building blocks. Every layer owns [`ParamId`]s into a shared
//! [`ParamStore`] and records its forward computation on a [`Tape`].

mod attention;
mod block;
mod downsample;
mod upsample;

pub use attention::{relative_differences, relative_encoding, VelocityAttention};
pub use block::VelocityBlock;
pub use downsample::{downsampled_len, Downsample};
pub use upsample::TransformerUpsample;

use rand::{Rng, RngCore};

use crate::error::Result;
use crate::numerics::{NodeId, ParamId, ParamStore, Tape, Tensor, LAYER_NORM_EPS};
use crate::real::Real;
use crate::sampling::TieKey;

/// Kaiming-uniform (`a = √5`) weights: `U(-1/√fan_in, 1/√fan_in)`.
pub(crate) fn init_weight<T: Real>(
    store: &mut ParamStore<T>,
    name: String,
    din: usize,
    dout: usize,
    rng: &mut dyn RngCore,
) -> Result<ParamId> {
    let bound = 1.0 / (din.max(1) as f64).sqrt();
    let values = (0..din * dout)
        .map(|_| T::of(rng.random_range(-bound..bound)))
        .collect();
    store.insert(name, &[din, dout], values)
}

pub(crate) fn init_const<T: Real>(store: &mut ParamStore<T>, name: String, d: usize, v: f64) -> Result<ParamId> {
    store.insert(name, &[d], vec![T::of(v); d])
}

/// `y = x·W (+ b)`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub din: usize,
    pub dout: usize,
}

impl Linear {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        din: usize,
        dout: usize,
        bias: bool,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        let w = init_weight(store, format!("{prefix}.w"), din, dout, rng)?;
        let b = if bias {
            Some(init_const(store, format!("{prefix}.b"), dout, 0.0)?)
        } else {
            None
        };
        Ok(Self { w, b, din, dout })
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, x: NodeId) -> Result<NodeId> {
        let w = tape.param(self.w);
        let y = tape.matmul(x, w)?;
        match self.b {
            Some(b) => {
                let b = tape.param(b);
                tape.add_row(y, b)
            }
            None => Ok(y),
        }
    }
}

/// Fully connected unit: linear → LayerNorm → GELU.
#[derive(Clone, Debug)]
pub struct Fc {
    pub linear: Linear,
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl Fc {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        din: usize,
        dout: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        Ok(Self {
            linear: Linear::new(store, &format!("{prefix}.linear"), din, dout, true, rng)?,
            gamma: init_const(store, format!("{prefix}.norm.gamma"), dout, 1.0)?,
            beta: init_const(store, format!("{prefix}.norm.beta"), dout, 0.0)?,
        })
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, x: NodeId) -> Result<NodeId> {
        let h = self.linear.forward(tape, x)?;
        let (g, b) = (tape.param(self.gamma), tape.param(self.beta));
        let h = tape.layer_norm(h, g, b, T::of(LAYER_NORM_EPS))?;
        Ok(tape.gelu(h))
    }
}

/// Two fully connected layers with a GELU in between, used for the
/// relative position and velocity encodings.
#[derive(Clone, Debug)]
pub struct EncodingMlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl EncodingMlp {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        Ok(Self {
            fc1: Linear::new(store, &format!("{prefix}.fc1"), in_dim, hidden, true, rng)?,
            fc2: Linear::new(store, &format!("{prefix}.fc2"), hidden, out_dim, true, rng)?,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.fc2.dout
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, x: NodeId) -> Result<NodeId> {
        let h = self.fc1.forward(tape, x)?;
        let h = tape.gelu(h);
        self.fc2.forward(tape, h)
    }
}

/// Point geometry of one stage. Positions, velocities and RCS pass through
/// the network untransformed; `origin` maps each point to its index in the
/// input scan.
#[derive(Clone, Debug, PartialEq)]
pub struct Geometry<T> {
    pub positions: Vec<[T; 2]>,
    pub velocities: Vec<T>,
    pub rcs: Vec<T>,
    pub origin: Vec<usize>,
}

impl<T: Real> Geometry<T> {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn keys(&self) -> Vec<TieKey<T>> {
        (0..self.len())
            .map(|i| {
                [
                    self.positions[i][0],
                    self.positions[i][1],
                    self.velocities[i],
                    self.rcs[i],
                ]
            })
            .collect()
    }

    pub fn position_tensor(&self) -> Tensor<T> {
        Tensor::from_vec(
            self.len(),
            2,
            self.positions.iter().flat_map(|p| [p[0], p[1]]).collect(),
        )
        .expect("two columns per point")
    }

    pub fn velocity_tensor(&self) -> Tensor<T> {
        Tensor::from_vec(self.len(), 1, self.velocities.clone()).expect("one column per point")
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            positions: idx.iter().map(|&i| self.positions[i]).collect(),
            velocities: idx.iter().map(|&i| self.velocities[i]).collect(),
            rcs: idx.iter().map(|&i| self.rcs[i]).collect(),
            origin: idx.iter().map(|&i| self.origin[i]).collect(),
        }
    }
}

/// Features of one stage together with their geometry.
#[derive(Clone, Debug)]
pub struct StageState<T> {
    pub features: NodeId,
    pub geometry: Geometry<T>,
}
