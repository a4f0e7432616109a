//! Scalar-generic numeric substrate: tensors, RNG, kernels, reverse-mode
//! tape, Adam, and a small MLP container. Everything above this module is
//! model/pipeline logic; everything in it is plain math.

mod adam;
pub mod ops;
mod mlp;
mod rng;
mod scalar;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use mlp::{Activation, DenseParams, Mlp};
pub use rng::Rng;
pub use scalar::Scalar;
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::Tensor;
