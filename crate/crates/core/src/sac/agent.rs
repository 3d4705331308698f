use rand::Rng;
use rand_distr::StandardNormal;

use super::{Batch, SacConfig, SacError};
use crate::numerics::{
    gaussian_sample_reparam, squashed_gaussian, squashed_log_prob, Adam, AdamConfig, Binding, Graph, Mlp, Tensor, Var,
};

pub(crate) fn column_block(t: &Tensor, start: usize, end: usize) -> Tensor {
    let rows = t.rows();
    let mut data = Vec::with_capacity(rows * (end - start));
    for r in 0..rows {
        data.extend_from_slice(&t.row_slice(r)[start..end]);
    }
    Tensor::new(vec![rows, end - start], data).expect("column block shape")
}

pub(crate) fn normal_tensor<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::new(vec![rows, cols], data).expect("noise shape")
}

/// Weight on `log π` in every loss: `β`, divided by the action dimension
/// when log-probabilities are normalised per dimension.
pub fn entropy_weight(cfg: &SacConfig, action_dim: usize) -> f64 {
    if cfg.entropy_per_dim {
        cfg.beta / action_dim as f64
    } else {
        cfg.beta
    }
}

/// Per-DU actor: MLP to `[mean, log_std]` of a tanh-squashed Gaussian over
/// the raw action box `[-a_max, a_max]^dim`.
#[derive(Debug)]
pub struct SacAgent {
    pub actor: Mlp,
    pub opt: Adam,
    action_dim: usize,
    action_scale: f64,
    log_std_min: f64,
    log_std_max: f64,
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(id: usize, state_dim: usize, action_dim: usize, cfg: &SacConfig, rng: &mut R) -> Self {
        let mut widths = vec![state_dim];
        widths.extend_from_slice(&cfg.actor_hidden);
        widths.push(2 * action_dim);
        Self {
            actor: Mlp::new(&format!("actor{}", id), &widths, rng),
            opt: Adam::new(AdamConfig {
                lr: cfg.lr_actor,
                ..AdamConfig::default()
            }),
            action_dim,
            action_scale: cfg.action_scale,
            log_std_min: cfg.log_std_min,
            log_std_max: cfg.log_std_max,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn action_scale(&self) -> f64 {
        self.action_scale
    }

    /// Mean and clamped log-std for a `[B, state_dim]` batch, tape-free.
    pub fn head(&self, states: &Tensor) -> Result<(Tensor, Tensor), SacError> {
        let out = self.actor.eval(states)?;
        let mean = column_block(&out, 0, self.action_dim);
        let log_std = column_block(&out, self.action_dim, 2 * self.action_dim).map(|v| v.clamp(self.log_std_min, self.log_std_max));
        Ok((mean, log_std))
    }

    /// Samples (or, deterministically, squashes the mean of) the policy at
    /// one local state. Returns the raw action and its log-probability.
    pub fn select_action<R: Rng + ?Sized>(
        &self,
        state: &[f64],
        rng: &mut R,
        deterministic: bool,
    ) -> Result<(Vec<f64>, f64), SacError> {
        if state.iter().any(|v| !v.is_finite()) {
            return Err(SacError::NonFiniteState);
        }
        let (mean, log_std) = self.head(&Tensor::row(state))?;
        if deterministic {
            let logp = squashed_log_prob(mean.data(), mean.data(), log_std.data(), self.action_scale);
            Ok((mean.data().iter().map(|m| self.action_scale * m.tanh()).collect(), logp))
        } else {
            Ok(gaussian_sample_reparam(mean.data(), log_std.data(), self.action_scale, rng))
        }
    }

    /// Samples actions and log-probs for a `[B, state_dim]` batch, tape-free.
    pub fn sample_batch<R: Rng + ?Sized>(&self, states: &Tensor, rng: &mut R) -> Result<(Tensor, Vec<f64>), SacError> {
        let (mean, log_std) = self.head(states)?;
        let b = states.rows();
        let mut actions = Vec::with_capacity(b * self.action_dim);
        let mut logps = Vec::with_capacity(b);
        for r in 0..b {
            let (a, lp) = gaussian_sample_reparam(mean.row_slice(r), log_std.row_slice(r), self.action_scale, rng);
            actions.extend(a);
            logps.push(lp);
        }
        Ok((Tensor::new(vec![b, self.action_dim], actions)?, logps))
    }

    /// Reparameterised policy on the tape: `(action [B, dim], log π [B, 1])`.
    pub fn policy_on_tape(&self, g: &mut Graph, states: Var, eps: &Tensor, binding: Binding) -> Result<(Var, Var), SacError> {
        let out = self.actor.forward(g, states, binding)?;
        let mean = g.slice_cols(out, 0, self.action_dim)?;
        let raw_log_std = g.slice_cols(out, self.action_dim, 2 * self.action_dim)?;
        let log_std = g.clamp(raw_log_std, self.log_std_min, self.log_std_max);
        Ok(squashed_gaussian(g, mean, log_std, eps, self.action_scale)?)
    }

    /// One entropy-regularised policy step for agent `index`:
    /// minimises `mean(w·log π(a|s_i) − Q(s, a_{−i} ∪ a))` with the critic
    /// frozen and the other agents' actions taken from the batch. Returns the
    /// pre-step loss.
    pub fn update_actor<R: Rng + ?Sized>(
        &mut self,
        index: usize,
        critic: &CentralCritic,
        batch: &Batch,
        cfg: &SacConfig,
        rng: &mut R,
    ) -> Result<f64, SacError> {
        if batch.is_empty() {
            return Err(SacError::InsufficientBuffer { have: 0, need: 1 });
        }
        let b = batch.len();
        let n_agents = batch.actions.cols() / self.action_dim;
        let sd = batch.states.cols() / n_agents;
        let mut g = Graph::new();
        let local = g.constant(column_block(&batch.states, index * sd, (index + 1) * sd));
        let eps = normal_tensor(b, self.action_dim, rng);
        let (action, logp) = self.policy_on_tape(&mut g, local, &eps, Binding::Trainable)?;
        let mut parts = Vec::with_capacity(n_agents);
        for j in 0..n_agents {
            if j == index {
                parts.push(action);
            } else {
                let a = column_block(&batch.actions, j * self.action_dim, (j + 1) * self.action_dim);
                parts.push(g.constant(a));
            }
        }
        let joint = g.concat_cols(&parts)?;
        let states = g.constant(batch.states.clone());
        let q = critic.q_on_tape(&mut g, states, joint, Binding::Frozen)?;
        let ent = g.scale(logp, entropy_weight(cfg, self.action_dim));
        let per = g.sub(ent, q)?;
        let loss = g.mean(per);
        let value = g.value(loss).item();
        g.backward(loss)?;
        let mut params = self.actor.params_mut();
        g.accumulate_into(params.iter_mut().map(|p| &mut **p));
        self.opt.step(&mut params)?;
        Ok(value)
    }
}

/// `y = r + γ(1 − done)(Q'(s', a') − w·log π(a'|s'))`.
pub fn critic_target(
    rewards: &[f64],
    dones: &[bool],
    q_next: &[f64],
    next_log_probs: &[f64],
    gamma: f64,
    entropy_weight: f64,
) -> Result<Vec<f64>, SacError> {
    let n = rewards.len();
    if dones.len() != n || q_next.len() != n || next_log_probs.len() != n {
        return Err(SacError::Shape(format!(
            "critic target inputs have lengths {}, {}, {}, {}",
            n,
            dones.len(),
            q_next.len(),
            next_log_probs.len()
        )));
    }
    Ok((0..n)
        .map(|i| {
            if dones[i] {
                rewards[i]
            } else {
                rewards[i] + gamma * (q_next[i] - entropy_weight * next_log_probs[i])
            }
        })
        .collect())
}

/// Centralised Q-network over the joint aligned state and joint raw action,
/// with a lagged target copy.
#[derive(Debug)]
pub struct CentralCritic {
    pub q: Mlp,
    pub target: Mlp,
    pub opt: Adam,
}

impl CentralCritic {
    pub fn new<R: Rng + ?Sized>(joint_state_dim: usize, joint_action_dim: usize, cfg: &SacConfig, rng: &mut R) -> Self {
        let mut widths = vec![joint_state_dim + joint_action_dim];
        widths.extend_from_slice(&cfg.critic_hidden);
        widths.push(1);
        let q = Mlp::new("critic", &widths, rng);
        let target = q.duplicate();
        Self {
            q,
            target,
            opt: Adam::new(AdamConfig {
                lr: cfg.lr_critic,
                ..AdamConfig::default()
            }),
        }
    }

    pub fn q_on_tape(&self, g: &mut Graph, states: Var, actions: Var, binding: Binding) -> Result<Var, SacError> {
        let x = g.concat_cols(&[states, actions])?;
        Ok(self.q.forward(g, x, binding)?)
    }

    fn joined(states: &Tensor, actions: &Tensor) -> Result<Tensor, SacError> {
        let mut g = Graph::new();
        let s = g.constant(states.clone());
        let a = g.constant(actions.clone());
        let x = g.concat_cols(&[s, a])?;
        Ok(g.value(x).clone())
    }

    pub fn q_eval(&self, states: &Tensor, actions: &Tensor) -> Result<Vec<f64>, SacError> {
        Ok(self.q.eval(&Self::joined(states, actions)?)?.into_data())
    }

    pub fn target_eval(&self, states: &Tensor, actions: &Tensor) -> Result<Vec<f64>, SacError> {
        Ok(self.target.eval(&Self::joined(states, actions)?)?.into_data())
    }

    /// Targets for a batch given next actions and their summed log-probs.
    pub fn targets(&self, batch: &Batch, next_actions: &Tensor, next_log_probs: &[f64], cfg: &SacConfig, action_dim: usize) -> Result<Vec<f64>, SacError> {
        let q_next = self.target_eval(&batch.next_states, next_actions)?;
        critic_target(
            &batch.rewards,
            &batch.dones,
            &q_next,
            next_log_probs,
            cfg.gamma,
            entropy_weight(cfg, action_dim),
        )
    }

    /// One Adam step on `mean((Q(s, a) − y)²)`, then a soft target update.
    /// Returns the pre-step loss.
    pub fn update_critic(&mut self, batch: &Batch, targets: &[f64], tau: f64) -> Result<f64, SacError> {
        if batch.is_empty() {
            return Err(SacError::InsufficientBuffer { have: 0, need: 1 });
        }
        let mut g = Graph::new();
        let s = g.constant(batch.states.clone());
        let a = g.constant(batch.actions.clone());
        let q = self.q_on_tape(&mut g, s, a, Binding::Trainable)?;
        let y = g.constant(Tensor::new(vec![targets.len(), 1], targets.to_vec())?);
        let diff = g.sub(q, y)?;
        let sq = g.square(diff);
        let loss = g.mean(sq);
        let value = g.value(loss).item();
        g.backward(loss)?;
        let mut params = self.q.params_mut();
        g.accumulate_into(params.iter_mut().map(|p| &mut **p));
        self.opt.step(&mut params)?;
        self.target.soft_update_from(&self.q, tau);
        Ok(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> SacConfig {
        SacConfig {
            actor_hidden: vec![8],
            critic_hidden: vec![8],
            ..SacConfig::default()
        }
    }

    #[test]
    fn hand_computed_targets() {
        let y = critic_target(&[1.0, 2.0], &[false, false], &[10.0, -4.0], &[-1.5, 0.5], 0.9, 0.2).unwrap();
        assert!((y[0] - (1.0 + 0.9 * (10.0 + 0.3))).abs() < 1e-12);
        assert!((y[1] - (2.0 + 0.9 * (-4.0 - 0.1))).abs() < 1e-12);
        let y0 = critic_target(&[1.5], &[false], &[7.0], &[3.0], 0.0, 0.2).unwrap();
        assert_eq!(y0, vec![1.5]);
        let yt = critic_target(&[0.5], &[true], &[7.0], &[3.0], 0.99, 0.2).unwrap();
        assert_eq!(yt, vec![0.5]);
    }

    #[test]
    fn deterministic_action_repeats() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let agent = SacAgent::new(0, 4, 3, &cfg(), &mut rng);
        let a = agent.select_action(&[0.1, 0.2, 0.3, 0.4], &mut rng, true).unwrap();
        let b = agent.select_action(&[0.1, 0.2, 0.3, 0.4], &mut rng, true).unwrap();
        assert_eq!(a, b);
        assert!(a.0.iter().all(|v| v.abs() <= agent.action_scale()));
        assert!(matches!(
            agent.select_action(&[f64::NAN, 0.0, 0.0, 0.0], &mut rng, false),
            Err(SacError::NonFiniteState)
        ));
    }

    #[test]
    fn critic_overfits_a_fixed_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = SacConfig {
            lr_critic: 1e-2,
            ..cfg()
        };
        let mut critic = CentralCritic::new(3, 2, &c, &mut rng);
        let batch = Batch {
            states: Tensor::new(vec![4, 3], (0..12).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap(),
            actions: Tensor::new(vec![4, 2], (0..8).map(|i| (i as f64 * 0.71).cos()).collect()).unwrap(),
            rewards: vec![0.0; 4],
            next_states: Tensor::zeros(&[4, 3]),
            dones: vec![true; 4],
        };
        let y = [1.0, -0.5, 2.0, 0.3];
        let first = critic.update_critic(&batch, &y, 0.005).unwrap();
        let mut last = first;
        for _ in 0..500 {
            last = critic.update_critic(&batch, &y, 0.005).unwrap();
            assert!(last >= 0.0);
        }
        assert!(last < 0.1 * first, "{} vs {}", last, first);
    }
}
