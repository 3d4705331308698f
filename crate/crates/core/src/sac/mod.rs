//! Multi-agent soft actor-critic: one actor per DU over its local aligned
//! state, a centralised critic over the joint state and action, and a
//! prompt update on the combined RL + distillation loss.

mod agent;
mod replay;
mod trainer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::EnvError;
use crate::numerics::{Adam, CheckpointError, Graph, NumericsError, Tensor, Var};
use crate::srm::{LearnablePrompts, SrmError};

pub(crate) use agent::column_block;
pub use agent::{critic_target, entropy_weight, CentralCritic, SacAgent};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use trainer::{
    metrics_header, run_random_policy, EvalReport, MetricsRow, TrainConfig, TrainOutcome, Trainer, TrainerOptions,
};

#[derive(Debug, Error)]
pub enum SacError {
    #[error("replay buffer holds {have} transitions, need {need}")]
    InsufficientBuffer { have: usize, need: usize },
    #[error("state contains non-finite values")]
    NonFiniteState,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Srm(#[from] SrmError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Codec(#[from] crate::codec::CodecError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_prompt: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Discount `γ`.
    pub gamma: f64,
    /// Entropy weight `β`.
    pub beta: f64,
    /// Divide `log π` by the action dimension inside every loss.
    pub entropy_per_dim: bool,
    pub tau_target: f64,
    /// Distillation coefficient `λ`.
    pub lambda_kd: f64,
    /// Raw actions live in `[-action_scale, action_scale]`.
    pub action_scale: f64,
    pub log_std_min: f64,
    pub log_std_max: f64,
    /// Iterations of uniform-random actions before learning starts.
    pub warmup_iterations: usize,
    /// `N_t`.
    pub iterations: usize,
    pub episode_len: usize,
    pub convergence_window: usize,
    pub convergence_epsilon: f64,
    /// Convergence is not checked before this many iterations.
    pub min_iterations: usize,
    pub stop_on_convergence: bool,
    /// Write a checkpoint every this many iterations; 0 disables.
    pub checkpoint_every: usize,
    /// Random-policy steps collected for offline adapter alignment.
    pub adapter_pairs: usize,
    pub adapter_epochs: usize,
    pub adapter_lr: f64,
    pub adapter_batch: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            actor_hidden: vec![64, 64, 64],
            critic_hidden: vec![64, 64, 64],
            lr_actor: 1e-4,
            lr_critic: 1e-4,
            lr_prompt: 1e-4,
            batch_size: 128,
            buffer_capacity: 100_000,
            gamma: 0.95,
            beta: 0.2,
            entropy_per_dim: true,
            tau_target: 0.005,
            lambda_kd: 0.1,
            action_scale: 3.0,
            log_std_min: -20.0,
            log_std_max: 2.0,
            warmup_iterations: 128,
            iterations: 5000,
            episode_len: 200,
            convergence_window: 200,
            convergence_epsilon: 1e-3,
            min_iterations: 1000,
            stop_on_convergence: true,
            checkpoint_every: 0,
            adapter_pairs: 256,
            adapter_epochs: 30,
            adapter_lr: 1e-3,
            adapter_batch: 32,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<(), SacError> {
        let bad = |m: &str| Err(SacError::InvalidConfig(m.to_string()));
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("need 0 < batch_size <= buffer_capacity");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.beta > 0.0) {
            return bad("beta must be positive");
        }
        if !(0.0..=1.0).contains(&self.tau_target) {
            return bad("tau_target must lie in [0, 1]");
        }
        if self.lambda_kd < 0.0 {
            return bad("lambda_kd must be >= 0");
        }
        if !(self.action_scale > 0.0) || self.log_std_min >= self.log_std_max {
            return bad("action box and log-std bounds must be nondegenerate");
        }
        if self.iterations == 0 || self.episode_len == 0 {
            return bad("iterations and episode_len must be positive");
        }
        if self.convergence_window < 2 {
            return bad("convergence_window must be >= 2");
        }
        if [self.lr_actor, self.lr_critic, self.lr_prompt, self.adapter_lr]
            .iter()
            .any(|lr| *lr < 0.0)
        {
            return bad("learning rates must be >= 0");
        }
        Ok(())
    }
}

/// True when the means of the two halves of the last `window` values differ
/// by less than `epsilon`, relative to the recent mean.
pub fn check_convergence(history: &[f64], window: usize, epsilon: f64) -> bool {
    if window < 2 || history.len() < window {
        return false;
    }
    let tail = &history[history.len() - window..];
    let half = window / 2;
    let first = tail[..half].iter().sum::<f64>() / half as f64;
    let second = tail[half..].iter().sum::<f64>() / (window - half) as f64;
    (second - first).abs() / second.abs().max(1e-12) < epsilon
}

#[derive(Clone, Debug, PartialEq)]
pub struct PromptUpdate {
    pub total: f64,
    pub rl: f64,
    pub kd: Option<f64>,
    /// Gradient of the total loss with respect to the prompt rows.
    pub grad: Tensor,
}

/// `L_total = L_RL + λ·L_distill`; one Adam step on the learnable prompts
/// only. Gradients reaching other parameters on the tape are discarded.
pub fn update_prompts(
    g: &mut Graph,
    prompts: &mut LearnablePrompts,
    opt: &mut Adam,
    rl_loss: Var,
    kd_loss: Option<Var>,
    lambda: f64,
) -> Result<PromptUpdate, SacError> {
    let rl = g.value(rl_loss).item();
    let (total, kd) = match kd_loss {
        Some(kd) => {
            let weighted = g.scale(kd, lambda);
            (g.add(rl_loss, weighted)?, Some(g.value(kd).item()))
        }
        None => (rl_loss, None),
    };
    g.backward(total)?;
    let grad = g
        .param_grad(&prompts.param)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(prompts.param.value.shape()));
    prompts.param.accumulate_grad(&grad);
    opt.step(&mut [&mut prompts.param])?;
    Ok(PromptUpdate {
        total: g.value(total).item(),
        rl,
        kd,
        grad,
    })
}
