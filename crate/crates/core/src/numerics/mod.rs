//! Small-array numerics: tensors, kernels with explicit backward passes,
//! a recording tape, parameters, the optimizer and the finite-difference
//! gradient oracle.

pub mod checkpoint;
pub mod gradcheck;
pub mod kernels;
pub mod optim;
mod params;
mod tape;
mod tensor;

pub use kernels::{gelu, layer_norm, linear, softmax, Axis, LAYER_NORM_EPS};
pub use optim::{adamw_step, cosine_lr, AdamWConfig, LrSchedule, OptimState};
pub use params::{ParamEntry, ParamId, ParamStore};
pub use tape::{gather_rows, scatter_add_rows, Gradients, NodeId, Tape};
pub use tensor::Tensor;
