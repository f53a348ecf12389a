//! A small deterministic differentiable-computation core: dense tensors,
//! a named parameter store, a reverse-mode tape over vector-valued nodes,
//! Adam and a central-difference gradient checker.

mod adam;
mod gradcheck;
mod graph;
mod ops;
mod params;
mod tensor;

pub use adam::Adam;
pub use gradcheck::{grad_check, roundoff_floor, GradCheckReport};
pub use graph::{Gradients, Graph, NodeId};
pub use ops::{
    cross_entropy, embedding_lookup, leaky_relu, linear, sigmoid, softmax, tanh, CE_CLIP,
};
pub use params::{Init, ParamId, ParamStore};
pub use tensor::Tensor;
