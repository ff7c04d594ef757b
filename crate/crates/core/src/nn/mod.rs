//! Minimal differentiable tensor engine.

mod graph;
pub mod kernels;
mod params;
mod tensor;

pub use graph::{Graph, Var};
pub use params::{adam_step, AdamHyper, ParamEntry, ParamStore};
pub use tensor::Tensor;
