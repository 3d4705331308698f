//! Dense `f64` tensors, a reverse-mode autodiff tape, MLPs and Adam.
//!
//! Everything trainable in the crate (actors, critic, adapters, learnable
//! prompts) is built on these pieces.

mod adam;
pub mod checkpoint;
pub mod dist;
mod graph;
mod mlp;
mod param;
mod tensor;

use thiserror::Error;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, CheckpointError};
pub use dist::{gaussian_sample_reparam, kl_divergence, softmax, squashed_gaussian, squashed_log_prob};
pub use graph::{sigmoid, softplus, Graph, Var};
pub use mlp::{Binding, Linear, Mlp};
pub use param::{param_hash, Param, ParamId};
pub use tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: expected {expected}, found {found}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },
    #[error("backward called on a value that does not depend on any differentiable input")]
    Detached,
    #[error("parameter `{0}` has no gradient")]
    MissingGradient(String),
    #[error("{0} is not a probability distribution")]
    NotADistribution(&'static str),
}
