//! Dense tensors, reverse-mode differentiation, Adam and the noam schedule.

mod graph;
mod optim;
mod params;
mod scalar;
mod tensor;

pub use graph::{Gradients, Graph, NodeId, ParamId, LAYER_NORM_EPS};
pub use optim::{noam_lr, Adam, AdamConfig};
pub use params::ParamStore;
pub use scalar::{DType, Scalar};
pub use tensor::Tensor;
