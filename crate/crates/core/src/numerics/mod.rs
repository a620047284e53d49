//! Dense f64 tensors, reverse-mode autodiff and optimization.
//!
//! Everything is 64-bit: the verification oracles downstream (exact
//! transport, fixed points) need tight tolerances and the models are small
//! enough that precision is cheap. A [`Tape`] records one training step's
//! computation; tensors are immutable between steps.

mod checkpoint;
mod layers;
mod optim;
mod tape;
mod tensor;

pub use checkpoint::{load_params, save_params, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layers::{affine, xavier_uniform, Activation, Gru, Mlp};
pub use optim::{AdamConfig, ParamSet};
pub use tape::{Tape, Tx};
pub use tensor::Tensor;

/// Gradient map produced by a backward pass, keyed by parameter name.
pub type GradMap = std::collections::BTreeMap<String, Vec<f64>>;

/// Live parameter handles on a tape, keyed by parameter name.
pub type BoundParams = std::collections::BTreeMap<String, Tx>;
