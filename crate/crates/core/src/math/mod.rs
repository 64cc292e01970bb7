//! Numeric kernel: tensors, attention, reverse-mode differentiation, Adam and
//! seeded random streams.

pub mod autodiff;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use autodiff::{Gradients, Graph, NodeId};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use rng::Rng;
pub use tensor::{scaled_dot_attention, Tensor};
