//! Reverse-mode evaluation record for the fixed set of operations the
//! network uses. A [`Tape`] borrows a [`ParamStore`] immutably, so any
//! number of tapes can run forward passes concurrently against frozen
//! parameters; gradients come back as a [`Gradients`] value that the
//! caller folds into the store.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::kernels::{self, LayerNormCache};
use crate::numerics::{ParamId, ParamStore, Tensor};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

enum Op<T> {
    Input,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Gelu(NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        cache: LayerNormCache<T>,
    },
    Gather {
        x: NodeId,
        idx: Vec<usize>,
    },
    ConcatCols(Vec<NodeId>),
    GroupSoftmax {
        x: NodeId,
        k: usize,
    },
    GroupSum {
        x: NodeId,
        k: usize,
    },
    GroupMax {
        x: NodeId,
        arg: Vec<usize>,
    },
}

struct Node<T> {
    op: Op<T>,
    /// `None` for parameter leaves, whose values live in the store.
    value: Option<Tensor<T>>,
}

pub struct Tape<'p, T> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_nodes: HashMap<ParamId, NodeId>,
}

/// Per-node adjoints produced by [`Tape::backward`].
pub struct Gradients<T> {
    nodes: Vec<Option<Tensor<T>>>,
    params: Vec<(ParamId, NodeId)>,
}

impl<T: Real> Gradients<T> {
    pub fn of(&self, node: NodeId) -> Option<&Tensor<T>> {
        self.nodes[node.0].as_ref()
    }

    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> + '_ {
        self.params
            .iter()
            .filter_map(|&(p, n)| self.nodes[n.0].as_ref().map(|g| (p, g)))
    }

    /// Adds every parameter gradient into `store`'s gradient buffers.
    pub fn accumulate_into(&self, store: &mut ParamStore<T>) -> Result<()> {
        for (p, g) in self.param_grads() {
            store.accumulate(p, g)?;
        }
        Ok(())
    }
}

impl<'p, T: Real> Tape<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Every grouped softmax recorded so far, with its group size.
    pub fn group_softmax_nodes(&self) -> Vec<(NodeId, usize)> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::GroupSoftmax { k, .. } => Some((NodeId(i), k)),
                _ => None,
            })
            .collect()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        let node = &self.nodes[id.0];
        match (&node.value, &node.op) {
            (Some(v), _) => v,
            (None, Op::Param(p)) => self.params.value(*p),
            (None, _) => unreachable!("non-parameter node without a value"),
        }
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>) -> NodeId {
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Op::Input, value)
    }

    /// Leaf for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(&n) = self.param_nodes.get(&id) {
            return n;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        let n = NodeId(self.nodes.len() - 1);
        self.param_nodes.insert(id, n);
        n
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = kernels::matmul(self.value(a), self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), v))
    }

    /// Adds a `1×D` row to every row of `x`.
    pub fn add_row(&mut self, x: NodeId, row: NodeId) -> Result<NodeId> {
        let mut v = self.value(x).clone();
        kernels::add_row_inplace(&mut v, self.value(row), "add_row")?;
        Ok(self.push(Op::AddRow(x, row), v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let v = kernels::gelu(self.value(x));
        self.push(Op::Gelu(x), v)
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, eps: T) -> Result<NodeId> {
        let (v, cache) = kernels::layer_norm(self.value(x), self.value(gamma), self.value(beta), eps)?;
        Ok(self.push(
            Op::LayerNorm {
                x,
                gamma,
                beta,
                cache,
            },
            v,
        ))
    }

    /// `out[r] = x[idx[r]]`.
    pub fn gather(&mut self, x: NodeId, idx: Vec<usize>) -> Result<NodeId> {
        let v = gather_rows(self.value(x), &idx)?;
        Ok(self.push(Op::Gather { x, idx }, v))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let rows = parts
            .first()
            .map(|&p| self.value(p).rows())
            .ok_or_else(|| Error::dim("concat_cols", "no inputs"))?;
        let mut cols = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return Err(Error::dim(
                    "concat_cols",
                    format!("row counts differ: {} vs {rows}", v.rows()),
                ));
            }
            cols += v.cols();
        }
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                out.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(Op::ConcatCols(parts.to_vec()), out))
    }

    pub fn group_softmax(&mut self, x: NodeId, k: usize) -> Result<NodeId> {
        let v = kernels::group_softmax(self.value(x), k)?;
        Ok(self.push(Op::GroupSoftmax { x, k }, v))
    }

    pub fn group_sum(&mut self, x: NodeId, k: usize) -> Result<NodeId> {
        let v = kernels::group_sum(self.value(x), k)?;
        Ok(self.push(Op::GroupSum { x, k }, v))
    }

    pub fn group_max(&mut self, x: NodeId, k: usize) -> Result<NodeId> {
        let (v, arg) = kernels::group_max(self.value(x), k)?;
        Ok(self.push(Op::GroupMax { x, arg }, v))
    }

    /// Propagates `seed = ∂L/∂output` back through every recorded node.
    pub fn backward(&self, output: NodeId, seed: Tensor<T>) -> Result<Gradients<T>> {
        if seed.shape() != self.value(output).shape() {
            return Err(Error::dim(
                "backward",
                format!(
                    "seed {:?} for output {:?}",
                    seed.shape(),
                    self.value(output).shape()
                ),
            ));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(seed);

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    let ga = kernels::matmul_nt(&g, self.value(*b))?;
                    let gb = kernels::matmul_tn(self.value(*a), &g)?;
                    add_grad(&mut grads, *a, ga)?;
                    add_grad(&mut grads, *b, gb)?;
                }
                Op::AddRow(x, row) => {
                    add_grad(&mut grads, *row, kernels::column_sums(&g))?;
                    add_grad(&mut grads, *x, g.clone())?;
                }
                Op::Add(a, b) => {
                    add_grad(&mut grads, *a, g.clone())?;
                    add_grad(&mut grads, *b, g.clone())?;
                }
                Op::Sub(a, b) => {
                    add_grad(&mut grads, *a, g.clone())?;
                    add_grad(&mut grads, *b, g.map(|v| -v))?;
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), "mul_backward", |x, y| x * y)?;
                    let gb = g.zip_map(self.value(*a), "mul_backward", |x, y| x * y)?;
                    add_grad(&mut grads, *a, ga)?;
                    add_grad(&mut grads, *b, gb)?;
                }
                Op::Gelu(x) => {
                    let gx = kernels::gelu_backward(self.value(*x), &g)?;
                    add_grad(&mut grads, *x, gx)?;
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    cache,
                } => {
                    let (gx, gg, gb) = kernels::layer_norm_backward(cache, self.value(*gamma), &g);
                    add_grad(&mut grads, *x, gx)?;
                    add_grad(&mut grads, *gamma, gg)?;
                    add_grad(&mut grads, *beta, gb)?;
                }
                Op::Gather { x, idx } => {
                    let gx = scatter_add_rows(&g, idx, self.value(*x).rows())?;
                    add_grad(&mut grads, *x, gx)?;
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let mut gp = Tensor::zeros(g.rows(), w);
                        for r in 0..g.rows() {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[off..off + w]);
                        }
                        off += w;
                        add_grad(&mut grads, p, gp)?;
                    }
                }
                Op::GroupSoftmax { x, k } => {
                    let probs = node.value.as_ref().expect("softmax value");
                    let gx = kernels::group_softmax_backward(probs, &g, *k)?;
                    add_grad(&mut grads, *x, gx)?;
                }
                Op::GroupSum { x, k } => {
                    let cols = g.cols();
                    let mut gx = Tensor::zeros(g.rows() * k, cols);
                    for r in 0..gx.rows() {
                        gx.row_mut(r).copy_from_slice(g.row(r / k));
                    }
                    add_grad(&mut grads, *x, gx)?;
                }
                Op::GroupMax { x, arg } => {
                    let src = self.value(*x);
                    let cols = src.cols();
                    let mut gx = Tensor::zeros(src.rows(), cols);
                    for (e, &r) in arg.iter().enumerate() {
                        let c = e % cols;
                        let v = gx.get(r, c) + g.data()[e];
                        gx.set(r, c, v);
                    }
                    add_grad(&mut grads, *x, gx)?;
                }
            }
            grads[i] = Some(g);
        }

        let mut params: Vec<(ParamId, NodeId)> =
            self.param_nodes.iter().map(|(&p, &n)| (p, n)).collect();
        params.sort_unstable_by_key(|&(p, _)| p);
        Ok(Gradients {
            nodes: grads,
            params,
        })
    }
}

fn add_grad<T: Real>(grads: &mut [Option<Tensor<T>>], id: NodeId, g: Tensor<T>) -> Result<()> {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// `out[r] = x[idx[r]]`.
pub fn gather_rows<T: Real>(x: &Tensor<T>, idx: &[usize]) -> Result<Tensor<T>> {
    let mut out = Tensor::zeros(idx.len(), x.cols());
    for (r, &i) in idx.iter().enumerate() {
        if i >= x.rows() {
            return Err(Error::dim(
                "gather",
                format!("index {i} out of range for {} rows", x.rows()),
            ));
        }
        out.row_mut(r).copy_from_slice(x.row(i));
    }
    Ok(out)
}

/// Adjoint of [`gather_rows`]: `out[idx[r]] += g[r]`.
pub fn scatter_add_rows<T: Real>(g: &Tensor<T>, idx: &[usize], rows: usize) -> Result<Tensor<T>> {
    if g.rows() != idx.len() {
        return Err(Error::dim(
            "scatter_add",
            format!("{} gradient rows for {} indices", g.rows(), idx.len()),
        ));
    }
    let mut out = Tensor::zeros(rows, g.cols());
    for (r, &i) in idx.iter().enumerate() {
        if i >= rows {
            return Err(Error::dim(
                "scatter_add",
                format!("index {i} out of range for {rows} rows"),
            ));
        }
        for (o, &v) in out.row_mut(i).iter_mut().zip(g.row(r)) {
            *o += v;
        }
    }
    Ok(out)
}
