use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::real::Real;

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry<T> {
    pub name: String,
    /// Logical shape as registered (`[D]` for vectors, `[Din, Dout]` for matrices).
    pub shape: Vec<usize>,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

/// Named parameters with paired gradient buffers, kept in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    entries: Vec<ParamEntry<T>>,
    by_name: HashMap<String, usize>,
}

fn matrix_dims(shape: &[usize]) -> Result<(usize, usize)> {
    match *shape {
        [d] => Ok((1, d)),
        [r, c] => Ok((r, c)),
        _ => Err(Error::dim(
            "param",
            format!("unsupported parameter rank {}", shape.len()),
        )),
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    /// Registers a parameter. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, shape: &[usize], value: Vec<T>) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Argument(format!("duplicate parameter name {name:?}")));
        }
        let (r, c) = matrix_dims(shape)?;
        let value = Tensor::from_vec(r, c, value)?;
        let id = self.entries.len();
        self.by_name.insert(name.clone(), id);
        self.entries.push(ParamEntry {
            name,
            shape: shape.to_vec(),
            grad: Tensor::zeros(r, c),
            value,
        });
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry<T> {
        &self.entries[id.0]
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry<T>] {
        &mut self.entries
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].grad
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry<T>> {
        self.id(name).map(|id| self.entry(id))
    }

    /// Adds `grad` into the gradient buffer of `id`.
    pub fn accumulate(&mut self, id: ParamId, grad: &Tensor<T>) -> Result<()> {
        let entry = &mut self.entries[id.0];
        entry.grad.add_assign(grad).map_err(|_| {
            Error::dim(
                "accumulate",
                format!(
                    "gradient {:?} for parameter {} of shape {:?}",
                    grad.shape(),
                    entry.name,
                    entry.value.shape()
                ),
            )
        })
    }

    pub fn scale_grads(&mut self, s: T) {
        for e in &mut self.entries {
            e.grad.scale(s);
        }
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.fill(T::zero());
        }
    }

    /// Flat copy of all gradients in registration order.
    pub fn flat_grads(&self) -> Vec<T> {
        self.entries
            .iter()
            .flat_map(|e| e.grad.data().iter().copied())
            .collect()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    shape: e.shape.clone(),
                    value: e.value.cast(),
                    grad: e.grad.cast(),
                })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }
}
