//! Minimal differentiable tensor engine backing the detector.

mod graph;
mod optim;
mod params;

pub use graph::{softplus, Gradients, Graph, Var};
pub(crate) use graph::logistic;
pub use optim::{AdamW, AdamWConfig};
pub use params::{ones, uniform, zeros, ParamId, ParamStore};

/// Dense `f64` tensor of arbitrary rank.
pub type Tensor = ndarray::ArrayD<f64>;
