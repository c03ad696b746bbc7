//! Minimal differentiable-computation core: tensors, a reverse-mode tape,
//! dense/dropout/softmax layers, Adam, checkpoints, and finite-difference
//! gradient verification.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod layers;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use layers::{Dense, DenseVars};
pub use tape::{DropoutMode, Grads, Tape, Var};
pub use tensor::{Real, Tensor, LN_2PI};

pub(crate) use tensor::widen;
