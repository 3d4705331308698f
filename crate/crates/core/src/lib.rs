//! Core of a prompt-fused multi-agent SAC controller for three-slice RAN
//! resource allocation: the radio environment, reward shaping, the action
//! codec, a small autodiff/MLP stack, the state representation module and
//! the trainer.

pub mod audit;
pub mod codec;
pub mod env;
pub mod numerics;
pub mod reward;
pub mod sac;
pub mod srm;
