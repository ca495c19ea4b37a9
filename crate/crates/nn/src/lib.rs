//! Minimal differentiable computation for small recurrent models.
//!
//! Values are `f64` vectors recorded on a [`Tape`]; parameters live in a
//! [`ParamSet`] and are trained with [`Adam`]. Recurrent models use
//! [`truncated_bptt`] to clip the history that gradients flow through.

mod bptt;
mod gradcheck;
pub mod io;
mod layers;
mod optim;
mod params;
mod tape;
mod tensor;

pub use bptt::{truncated_bptt, BpttOutput};
pub use gradcheck::finite_diff_check;
pub use layers::{gru_step, zero_all, Dense, GruCell};
pub use optim::{Adam, OptimizerState};
pub use params::{Gradients, ParamId, ParamSet};
pub use tape::{sigmoid, softmax_masked, NodeId, Tape};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("malformed parameter file: {0}")]
    Format(String),
    #[error("parameter file checksum mismatch")]
    Checksum,
    #[error("parameter file version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
