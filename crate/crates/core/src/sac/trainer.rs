use std::fmt::Write as _;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::agent::normal_tensor;
use super::{
    check_convergence, entropy_weight, update_prompts, Batch, CentralCritic, ReplayBuffer, SacAgent, SacConfig, SacError,
    Transition,
};
use crate::codec::{check_capacity, decode_action, sharing_ok, AllocationAction, ConstraintParams, RawActorOutput};
use crate::env::{AgentObservation, DuReport, EnvConfig, Environment, SliceId, NUM_SLICES};
use crate::numerics::{Adam, AdamConfig, Binding, Checkpoint, Graph, Tensor, Var};
use crate::reward::{total_reward, RewardParams};
use crate::srm::{train_adapters_offline, AlignmentReport, DomainTelemetry, Srm, SrmConfig, SrmWiring};

const ENV_STREAM_SALT: u64 = 0x00E7_0000_0000_0001;
const ALIGN_STREAM_SALT: u64 = 0x00A1_1CE0_0000_0002;
const EVAL_STREAM_SALT: u64 = 0x00E7_A100_0000_0003;

/// Everything one training run needs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub env: EnvConfig,
    pub reward: RewardParams,
    pub constraints: ConstraintParams,
    pub srm: SrmConfig,
    pub sac: SacConfig,
    pub wiring: SrmWiring,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), SacError> {
        self.env.validate()?;
        self.reward
            .validate()
            .map_err(|e| SacError::InvalidConfig(e.to_string()))?;
        self.constraints.validate()?;
        self.sac.validate()?;
        if self.srm.kd_temperature <= 0.0 {
            return Err(SacError::InvalidConfig("kd_temperature must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainerOptions {
    /// Directory for periodic checkpoints (`sac.checkpoint_every`).
    pub checkpoint_dir: Option<PathBuf>,
    /// Keep the prompt gradient of every prompt update.
    pub trace_prompt_grads: bool,
}

/// One logged training iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub iteration: usize,
    pub team_reward: f64,
    pub agent_rewards: Vec<f64>,
    pub r_q: f64,
    pub r_ng: f64,
    pub critic_loss: Option<f64>,
    pub actor_losses: Vec<Option<f64>>,
    pub distill_loss: Option<f64>,
    pub prompt_loss: Option<f64>,
    /// DU mean of the larger-is-better QoS per slice.
    pub qos: [f64; NUM_SLICES],
    pub capacity_ok: bool,
    pub sharing_ok: bool,
    pub done: bool,
}

pub fn metrics_header(n_du: usize) -> String {
    let mut cols = vec!["iteration".to_string(), "team_reward".to_string()];
    cols.extend((0..n_du).map(|i| format!("reward_du{}", i)));
    cols.extend(["r_q", "r_ng", "critic_loss"].map(String::from));
    cols.extend((0..n_du).map(|i| format!("actor_loss_du{}", i)));
    cols.extend(
        ["distill_loss", "prompt_loss", "qos_embb", "qos_mmtc", "qos_urllc", "capacity_ok", "sharing_ok", "done"]
            .map(String::from),
    );
    cols.join(",")
}

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        let mut s = format!("{},{}", self.iteration, self.team_reward);
        for r in &self.agent_rewards {
            write!(s, ",{}", r).unwrap();
        }
        write!(s, ",{},{},{}", self.r_q, self.r_ng, opt_field(self.critic_loss)).unwrap();
        for a in &self.actor_losses {
            write!(s, ",{}", opt_field(*a)).unwrap();
        }
        write!(
            s,
            ",{},{},{},{},{},{},{},{}",
            opt_field(self.distill_loss),
            opt_field(self.prompt_loss),
            self.qos[0],
            self.qos[1],
            self.qos[2],
            self.capacity_ok as u8,
            self.sharing_ok as u8,
            self.done as u8
        )
        .unwrap();
        s
    }
}

/// Result of rolling a fixed policy forward without learning.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Team reward per epoch.
    pub rewards: Vec<f64>,
    /// Epoch-mean rate of every UE in every epoch.
    pub ue_rates: Vec<(SliceId, f64)>,
    /// Fraction of (epoch, DU) pairs with active UEs in the slice whose
    /// QoS met the reward threshold; `None` when the slice never had UEs.
    pub satisfaction: [Option<f64>; NUM_SLICES],
    pub mean_qos: [f64; NUM_SLICES],
}

impl EvalReport {
    pub fn mean_reward(&self) -> f64 {
        if self.rewards.is_empty() {
            return 0.0;
        }
        self.rewards.iter().sum::<f64>() / self.rewards.len() as f64
    }
}

#[derive(Default)]
struct EvalAccumulator {
    rewards: Vec<f64>,
    ue_rates: Vec<(SliceId, f64)>,
    met: [usize; NUM_SLICES],
    seen: [usize; NUM_SLICES],
    qos_sum: [f64; NUM_SLICES],
    qos_n: usize,
}

impl EvalAccumulator {
    fn record(&mut self, reports: &[DuReport], reward: &RewardParams) {
        let mut team = 0.0;
        for r in reports {
            team += total_reward(&r.q_bar, reward).r_t;
            for (slice, rate) in r.ue_slices.iter().zip(&r.ue_rates) {
                self.ue_rates.push((*slice, *rate));
            }
            for l in 0..NUM_SLICES {
                self.qos_sum[l] += r.q_bar[l];
                if r.active_ues[l] > 0 {
                    self.seen[l] += 1;
                    if r.q_bar[l] >= reward.thr[l] {
                        self.met[l] += 1;
                    }
                }
            }
            self.qos_n += 1;
        }
        self.rewards.push(team / reports.len().max(1) as f64);
    }

    fn finish(self) -> EvalReport {
        let n = self.qos_n.max(1) as f64;
        EvalReport {
            rewards: self.rewards,
            ue_rates: self.ue_rates,
            satisfaction: std::array::from_fn(|l| (self.seen[l] > 0).then(|| self.met[l] as f64 / self.seen[l] as f64)),
            mean_qos: std::array::from_fn(|l| self.qos_sum[l] / n),
        }
    }
}

fn telemetry_from_obs(obs: &[AgentObservation], cfg: &EnvConfig) -> Vec<DomainTelemetry> {
    obs.iter().map(|o| DomainTelemetry::from_observation(o, cfg)).collect()
}

fn uniform_action<R: Rng + ?Sized>(dim: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-scale..=scale)).collect()
}

fn decode_all(env: &Environment, raws: &[Vec<f64>], cp: &ConstraintParams) -> Result<Vec<AllocationAction>, SacError> {
    let slots = env.ue_slots();
    env.state()
        .dus
        .iter()
        .zip(raws)
        .map(|(du, a)| {
            let raw = RawActorOutput::from_flat(a, slots, du.total_rbs)?;
            Ok(decode_action(&raw, du, cp))
        })
        .collect()
}

/// Rolls uniform-random raw actions through the decoder for `epochs` epochs.
pub fn run_random_policy(cfg: &TrainConfig, epochs: usize, seed: u64) -> Result<EvalReport, SacError> {
    cfg.validate()?;
    let mut env = Environment::new(cfg.env.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ EVAL_STREAM_SALT);
    let dim = RawActorOutput::dim(env.ue_slots(), cfg.env.rbs_per_du);
    let mut acc = EvalAccumulator::default();
    for t in 0..epochs {
        let raws: Vec<Vec<f64>> = (0..cfg.env.n_du)
            .map(|_| uniform_action(dim, cfg.sac.action_scale, &mut rng))
            .collect();
        let actions = decode_all(&env, &raws, &cfg.constraints)?;
        let out = env.step(&actions)?;
        acc.record(&out.reports, &cfg.reward);
        if (t + 1) % cfg.sac.episode_len == 0 {
            env.reset();
        }
    }
    Ok(acc.finish())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub iterations: usize,
    pub converged_at: Option<usize>,
}

/// Online multi-agent training loop over one environment.
#[derive(Debug)]
pub struct Trainer {
    cfg: TrainConfig,
    options: TrainerOptions,
    env: Environment,
    srm: Srm,
    agents: Vec<SacAgent>,
    critic: CentralCritic,
    prompt_opt: Adam,
    replay: ReplayBuffer,
    rng: ChaCha8Rng,
    obs: Vec<AgentObservation>,
    telemetry: Vec<DomainTelemetry>,
    iteration: usize,
    episode_step: usize,
    reward_history: Vec<f64>,
    converged_at: Option<usize>,
    metrics: Vec<MetricsRow>,
    prompt_grads: Vec<Tensor>,
    alignment: Option<AlignmentReport>,
}

struct Acting {
    graph: Graph,
    aligned: Vec<Var>,
    kd: Vec<Var>,
    /// On-tape actions and log-probs, present once learning has started.
    policy: Option<Vec<(Var, Var)>>,
    raws: Vec<Vec<f64>>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, options: TrainerOptions) -> Result<Self, SacError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let env = Environment::new(cfg.env.clone(), cfg.seed ^ ENV_STREAM_SALT)?;
        let slots = env.ue_slots();
        let rbs = cfg.env.rbs_per_du;
        let state_dim = AgentObservation::feature_dim(slots, rbs);
        let action_dim = RawActorOutput::dim(slots, rbs);
        let mut srm = Srm::new(cfg.wiring, cfg.srm.clone(), state_dim, &mut rng);

        let alignment = if cfg.wiring.uses_adapters() && cfg.sac.adapter_pairs > 0 {
            let pairs = alignment_pairs(&cfg, &srm)?;
            Some(train_adapters_offline(
                &mut srm.adapters,
                &pairs,
                cfg.sac.adapter_epochs,
                cfg.sac.adapter_lr,
                cfg.sac.adapter_batch,
            )?)
        } else {
            None
        };

        let aligned = srm.aligned_dim();
        let n = cfg.env.n_du;
        let agents = (0..n)
            .map(|i| SacAgent::new(i, aligned, action_dim, &cfg.sac, &mut rng))
            .collect();
        let critic = CentralCritic::new(n * aligned, n * action_dim, &cfg.sac, &mut rng);
        let prompt_opt = Adam::new(AdamConfig {
            lr: cfg.sac.lr_prompt,
            ..AdamConfig::default()
        });
        let obs = env.observations();
        let telemetry = telemetry_from_obs(&obs, &cfg.env);
        Ok(Self {
            replay: ReplayBuffer::new(cfg.sac.buffer_capacity),
            cfg,
            options,
            env,
            srm,
            agents,
            critic,
            prompt_opt,
            rng,
            obs,
            telemetry,
            iteration: 0,
            episode_step: 0,
            reward_history: Vec::new(),
            converged_at: None,
            metrics: Vec::new(),
            prompt_grads: Vec::new(),
            alignment,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn srm(&self) -> &Srm {
        &self.srm
    }

    pub fn agents(&self) -> &[SacAgent] {
        &self.agents
    }

    pub fn critic(&self) -> &CentralCritic {
        &self.critic
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn metrics(&self) -> &[MetricsRow] {
        &self.metrics
    }

    pub fn converged_at(&self) -> Option<usize> {
        self.converged_at
    }

    pub fn alignment(&self) -> Option<&AlignmentReport> {
        self.alignment.as_ref()
    }

    /// Prompt gradients, one per prompt update, when tracing is enabled.
    pub fn prompt_grad_trace(&self) -> &[Tensor] {
        &self.prompt_grads
    }

    pub fn metrics_csv(&self) -> String {
        let mut s = metrics_header(self.cfg.env.n_du);
        s.push('\n');
        for row in &self.metrics {
            s.push_str(&row.csv_line());
            s.push('\n');
        }
        s
    }

    fn action_dim(&self) -> usize {
        self.agents[0].action_dim()
    }

    fn learning(&self) -> bool {
        self.iteration >= self.cfg.sac.warmup_iterations && self.replay.len() >= self.cfg.sac.batch_size
    }

    fn features(&self, obs: &AgentObservation) -> Vec<f64> {
        obs.features(&self.cfg.reward.thr)
    }

    fn act(&mut self) -> Result<Acting, SacError> {
        let mut g = Graph::new();
        let mut aligned = Vec::with_capacity(self.obs.len());
        let mut kd = Vec::new();
        for (o, t) in self.obs.iter().zip(&self.telemetry) {
            let tokens = self.srm.domain_tokens(t)?;
            let rep = self.srm.represent(&mut g, &self.features(o), &tokens)?;
            aligned.push(rep.aligned);
            kd.extend(rep.kd);
        }
        let dim = self.action_dim();
        let scale = self.cfg.sac.action_scale;
        if !self.learning() {
            let raws = (0..aligned.len())
                .map(|_| uniform_action(dim, scale, &mut self.rng))
                .collect();
            return Ok(Acting {
                graph: g,
                aligned,
                kd,
                policy: None,
                raws,
            });
        }
        let mut policy = Vec::with_capacity(aligned.len());
        let mut raws = Vec::with_capacity(aligned.len());
        for (agent, s) in self.agents.iter().zip(&aligned) {
            if !g.value(*s).is_finite() {
                return Err(SacError::NonFiniteState);
            }
            let eps = normal_tensor(1, dim, &mut self.rng);
            let (a, logp) = agent.policy_on_tape(&mut g, *s, &eps, Binding::Frozen)?;
            raws.push(g.value(a).data().to_vec());
            policy.push((a, logp));
        }
        Ok(Acting {
            graph: g,
            aligned,
            kd,
            policy: Some(policy),
            raws,
        })
    }

    fn aligned_states(&self, obs: &[AgentObservation], tel: &[DomainTelemetry]) -> Result<Vec<f64>, SacError> {
        let mut out = Vec::new();
        for (o, t) in obs.iter().zip(tel) {
            let tokens = self.srm.domain_tokens(t)?;
            out.extend(self.srm.represent_eval(&self.features(o), &tokens)?);
        }
        Ok(out)
    }

    fn learn(&mut self) -> Result<(f64, Vec<Option<f64>>), SacError> {
        let batch = self.replay.sample(self.cfg.sac.batch_size, &mut self.rng)?;
        let (next_actions, next_logp) = self.joint_next_actions(&batch)?;
        let dim = self.action_dim();
        let targets = self.critic.targets(&batch, &next_actions, &next_logp, &self.cfg.sac, dim)?;
        let critic_loss = self.critic.update_critic(&batch, &targets, self.cfg.sac.tau_target)?;
        let mut actor_losses = Vec::with_capacity(self.agents.len());
        for i in 0..self.agents.len() {
            let loss = self.agents[i].update_actor(i, &self.critic, &batch, &self.cfg.sac, &mut self.rng)?;
            actor_losses.push(Some(loss));
        }
        Ok((critic_loss, actor_losses))
    }

    fn joint_next_actions(&mut self, batch: &Batch) -> Result<(Tensor, Vec<f64>), SacError> {
        let n = self.agents.len();
        let b = batch.len();
        let sd = batch.next_states.cols() / n;
        let dim = self.action_dim();
        let mut joint = Tensor::zeros(&[b, n * dim]);
        let mut logp = vec![0.0; b];
        for (i, agent) in self.agents.iter().enumerate() {
            let local = super::agent::column_block(&batch.next_states, i * sd, (i + 1) * sd);
            let (a, lp) = agent.sample_batch(&local, &mut self.rng)?;
            for r in 0..b {
                for c in 0..dim {
                    joint.set(r, i * dim + c, a.get(r, c));
                }
                logp[r] += lp[r];
            }
        }
        Ok((joint, logp))
    }

    /// One iteration: act, step the environment, store, update critic,
    /// actors and prompts.
    pub fn step(&mut self) -> Result<&MetricsRow, SacError> {
        let mut acting = self.act()?;
        let actions = decode_all(&self.env, &acting.raws, &self.cfg.constraints)?;
        let capacity_ok = actions
            .iter()
            .zip(&self.env.state().dus)
            .all(|(a, du)| check_capacity(a, du.total_rbs));
        let sharing = actions.iter().all(|a| sharing_ok(a, &self.cfg.constraints));
        let out = self.env.step(&actions)?;

        let breakdowns: Vec<_> = out
            .reports
            .iter()
            .map(|r| total_reward(&r.q_bar, &self.cfg.reward))
            .collect();
        let n = breakdowns.len() as f64;
        let agent_rewards: Vec<f64> = breakdowns.iter().map(|b| b.r_t).collect();
        let team_reward = agent_rewards.iter().sum::<f64>() / n;
        let next_tel: Vec<DomainTelemetry> = out
            .reports
            .iter()
            .map(|r| DomainTelemetry::from_report(r, &self.cfg.env))
            .collect();

        let state: Vec<f64> = acting
            .aligned
            .iter()
            .flat_map(|v| acting.graph.value(*v).data().to_vec())
            .collect();
        let next_state = self.aligned_states(&out.observations, &next_tel)?;
        self.episode_step += 1;
        let done = self.episode_step >= self.cfg.sac.episode_len;
        self.replay.push(Transition {
            state,
            action: acting.raws.concat(),
            reward: team_reward,
            next_state,
            done,
        });

        let (critic_loss, actor_losses, prompt_loss, distill_loss) = if let Some(policy) = acting.policy.take() {
            let (c, a) = self.learn()?;
            let (p, d) = self.prompt_step(&mut acting, &policy)?;
            (Some(c), a, p, d)
        } else {
            let d = self.mean_kd(&acting);
            (None, vec![None; self.agents.len()], None, d)
        };

        if done {
            self.episode_step = 0;
            self.obs = self.env.reset();
            self.telemetry = telemetry_from_obs(&self.obs, &self.cfg.env);
        } else {
            self.obs = out.observations;
            self.telemetry = next_tel;
        }

        let qos = std::array::from_fn(|l| out.reports.iter().map(|r| r.q_bar[l]).sum::<f64>() / n);
        self.iteration += 1;
        self.reward_history.push(team_reward);
        let sac = &self.cfg.sac;
        if self.converged_at.is_none()
            && self.iteration >= sac.min_iterations
            && check_convergence(&self.reward_history, sac.convergence_window, sac.convergence_epsilon)
        {
            self.converged_at = Some(self.iteration);
        }
        self.metrics.push(MetricsRow {
            iteration: self.iteration,
            team_reward,
            agent_rewards,
            r_q: breakdowns.iter().map(|b| b.r_q).sum::<f64>() / n,
            r_ng: breakdowns.iter().map(|b| b.r_ng).sum::<f64>() / n,
            critic_loss,
            actor_losses,
            distill_loss,
            prompt_loss,
            qos,
            capacity_ok,
            sharing_ok: sharing,
            done,
        });
        if sac.checkpoint_every > 0 && self.iteration % sac.checkpoint_every == 0 {
            if let Some(dir) = &self.options.checkpoint_dir {
                self.checkpoint()?
                    .save(dir.join(format!("checkpoint_{:06}.ogck", self.iteration)))?;
            }
        }
        Ok(self.metrics.last().expect("row just pushed"))
    }

    fn mean_kd(&self, acting: &Acting) -> Option<f64> {
        if acting.kd.is_empty() {
            return None;
        }
        let sum: f64 = acting.kd.iter().map(|v| acting.graph.value(*v).item()).sum();
        Some(sum / acting.kd.len() as f64)
    }

    /// `L_RL = Σ_i w·log π_i − Q(s, a)` through the on-tape aligned states,
    /// with actors and critic frozen, plus `λ·L_distill`.
    fn prompt_step(&mut self, acting: &mut Acting, policy: &[(Var, Var)]) -> Result<(Option<f64>, Option<f64>), SacError> {
        let distill = self.mean_kd(acting);
        if !self.srm.wiring().uses_learnable_prompts() {
            return Ok((None, distill));
        }
        let g = &mut acting.graph;
        let w = entropy_weight(&self.cfg.sac, self.action_dim());
        let states = g.concat_cols(&acting.aligned)?;
        let actions: Vec<Var> = policy.iter().map(|(a, _)| *a).collect();
        let joint = g.concat_cols(&actions)?;
        let q = self.critic.q_on_tape(g, states, joint, Binding::Frozen)?;
        let logps: Vec<Var> = policy.iter().map(|(_, lp)| *lp).collect();
        let logp_cat = g.concat_cols(&logps)?;
        let logp_sum = g.sum(logp_cat);
        let ent = g.scale(logp_sum, w);
        let q_sum = g.sum(q);
        let rl = g.sub(ent, q_sum)?;
        let kd = if acting.kd.is_empty() {
            None
        } else {
            let cat = g.concat_cols(&acting.kd)?;
            let total = g.sum(cat);
            Some(g.scale(total, 1.0 / acting.kd.len() as f64))
        };
        let update = update_prompts(g, &mut self.srm.prompts, &mut self.prompt_opt, rl, kd, self.cfg.sac.lambda_kd)?;
        if self.options.trace_prompt_grads {
            self.prompt_grads.push(update.grad);
        }
        Ok((Some(update.total), distill))
    }

    /// Runs until `sac.iterations` or, when enabled, convergence.
    pub fn train(&mut self) -> Result<TrainOutcome, SacError> {
        while self.iteration < self.cfg.sac.iterations {
            self.step()?;
            if self.cfg.sac.stop_on_convergence && self.converged_at.is_some() {
                break;
            }
        }
        Ok(TrainOutcome {
            iterations: self.iteration,
            converged_at: self.converged_at,
        })
    }

    /// Deterministic-policy rollout on a fresh environment seeded with `seed`.
    pub fn evaluate(&self, epochs: usize, seed: u64) -> Result<EvalReport, SacError> {
        let mut env = Environment::new(self.cfg.env.clone(), seed)?;
        let mut obs = env.observations();
        let mut tel = telemetry_from_obs(&obs, &self.cfg.env);
        let mut unused = ChaCha8Rng::seed_from_u64(seed);
        let mut acc = EvalAccumulator::default();
        for t in 0..epochs {
            let mut raws = Vec::with_capacity(self.agents.len());
            for ((agent, o), te) in self.agents.iter().zip(&obs).zip(&tel) {
                let tokens = self.srm.domain_tokens(te)?;
                let s = self.srm.represent_eval(&self.features(o), &tokens)?;
                raws.push(agent.select_action(&s, &mut unused, true)?.0);
            }
            let actions = decode_all(&env, &raws, &self.cfg.constraints)?;
            let out = env.step(&actions)?;
            acc.record(&out.reports, &self.cfg.reward);
            if (t + 1) % self.cfg.sac.episode_len == 0 {
                obs = env.reset();
                tel = telemetry_from_obs(&obs, &self.cfg.env);
            } else {
                tel = out.reports.iter().map(|r| DomainTelemetry::from_report(r, &self.cfg.env)).collect();
                obs = out.observations;
            }
        }
        Ok(acc.finish())
    }

    /// Parameters, optimiser moments, RNG positions and the iteration count.
    pub fn checkpoint(&self) -> Result<Checkpoint, SacError> {
        let mut ck = Checkpoint::new();
        for (i, a) in self.agents.iter().enumerate() {
            ck.insert_params(&format!("actor{}", i), a.actor.params())?;
            insert_adam(&mut ck, &format!("adam/actor{}", i), &a.opt)?;
        }
        ck.insert_params("critic", self.critic.q.params())?;
        ck.insert_params("critic_target", self.critic.target.params())?;
        insert_adam(&mut ck, "adam/critic", &self.critic.opt)?;
        ck.insert_params("srm/prompts", std::iter::once(&self.srm.prompts.param))?;
        ck.insert_params("srm/adapters", self.srm.adapters.params())?;
        insert_adam(&mut ck, "adam/prompts", &self.prompt_opt)?;
        ck.insert_u64("rng/trainer", rng_words(&self.rng))?;
        ck.insert_u64("rng/env", rng_words(self.env.rng()))?;
        ck.insert_u64("iteration", vec![self.iteration as u64])?;
        Ok(ck)
    }

    /// Restores everything [`Trainer::checkpoint`] stores. Environment
    /// placement and the replay buffer are not part of a checkpoint.
    pub fn restore(&mut self, ck: &Checkpoint) -> Result<(), SacError> {
        for (i, a) in self.agents.iter_mut().enumerate() {
            ck.load_params(&format!("actor{}", i), a.actor.params_mut())?;
            load_adam(ck, &format!("adam/actor{}", i), &mut a.opt)?;
        }
        ck.load_params("critic", self.critic.q.params_mut())?;
        ck.load_params("critic_target", self.critic.target.params_mut())?;
        load_adam(ck, "adam/critic", &mut self.critic.opt)?;
        ck.load_params("srm/prompts", std::iter::once(&mut self.srm.prompts.param))?;
        ck.load_params("srm/adapters", self.srm.adapters.params_mut())?;
        load_adam(ck, "adam/prompts", &mut self.prompt_opt)?;
        self.rng = rng_from_words(required_u64(ck, "rng/trainer")?)?;
        self.env.set_rng(rng_from_words(required_u64(ck, "rng/env")?)?);
        self.iteration = required_u64(ck, "iteration")?.first().copied().unwrap_or(0) as usize;
        Ok(())
    }
}

/// Random-policy (features, embedding) pairs from a separate environment.
fn alignment_pairs(cfg: &TrainConfig, srm: &Srm) -> Result<Vec<(Vec<f64>, Vec<f64>)>, SacError> {
    let mut env = Environment::new(cfg.env.clone(), cfg.seed ^ ALIGN_STREAM_SALT)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ALIGN_STREAM_SALT);
    let dim = RawActorOutput::dim(env.ue_slots(), cfg.env.rbs_per_du);
    let mut obs = env.observations();
    let mut tel = telemetry_from_obs(&obs, &cfg.env);
    let mut pairs = Vec::with_capacity(cfg.sac.adapter_pairs);
    let mut t = 0;
    while pairs.len() < cfg.sac.adapter_pairs {
        for (o, te) in obs.iter().zip(&tel) {
            let tokens = srm.domain_tokens(te)?;
            if let Some(h) = srm.embedding(&tokens)? {
                pairs.push((o.features(&cfg.reward.thr), h));
            }
        }
        let raws: Vec<Vec<f64>> = (0..cfg.env.n_du)
            .map(|_| uniform_action(dim, cfg.sac.action_scale, &mut rng))
            .collect();
        let actions = decode_all(&env, &raws, &cfg.constraints)?;
        let out = env.step(&actions)?;
        t += 1;
        if t % cfg.sac.episode_len == 0 {
            obs = env.reset();
            tel = telemetry_from_obs(&obs, &cfg.env);
        } else {
            tel = out.reports.iter().map(|r| DomainTelemetry::from_report(r, &cfg.env)).collect();
            obs = out.observations;
        }
    }
    pairs.truncate(cfg.sac.adapter_pairs);
    Ok(pairs)
}

fn insert_adam(ck: &mut Checkpoint, prefix: &str, opt: &Adam) -> Result<(), SacError> {
    ck.insert_u64(format!("{}/step", prefix), vec![opt.steps()])?;
    let (m, v) = opt.moments();
    for (j, t) in m.iter().enumerate() {
        ck.insert_tensor(format!("{}/m/{}", prefix, j), t)?;
    }
    for (j, t) in v.iter().enumerate() {
        ck.insert_tensor(format!("{}/v/{}", prefix, j), t)?;
    }
    Ok(())
}

fn load_adam(ck: &Checkpoint, prefix: &str, opt: &mut Adam) -> Result<(), SacError> {
    let step = required_u64(ck, &format!("{}/step", prefix))?.first().copied().unwrap_or(0);
    let collect = |kind: &str| {
        (0..)
            .map_while(|j| ck.tensor(&format!("{}/{}/{}", prefix, kind, j)).cloned())
            .collect::<Vec<_>>()
    };
    opt.restore(step, collect("m"), collect("v"));
    Ok(())
}

fn required_u64<'a>(ck: &'a Checkpoint, name: &str) -> Result<&'a [u64], SacError> {
    ck.u64s(name)
        .ok_or_else(|| crate::numerics::CheckpointError::Missing(name.to_string()).into())
}

fn rng_words(rng: &ChaCha8Rng) -> Vec<u64> {
    let seed = rng.get_seed();
    let mut out: Vec<u64> = seed
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    out.push(rng.get_stream());
    let pos = rng.get_word_pos();
    out.push(pos as u64);
    out.push((pos >> 64) as u64);
    out
}

fn rng_from_words(w: &[u64]) -> Result<ChaCha8Rng, SacError> {
    if w.len() != 7 {
        return Err(SacError::Shape(format!("rng state has {} words, expected 7", w.len())));
    }
    let mut seed = [0u8; 32];
    for (i, word) in w[..4].iter().enumerate() {
        seed[i * 8..(i + 1) * 8].copy_from_slice(&word.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(w[4]);
    rng.set_word_pos(w[5] as u128 | ((w[6] as u128) << 64));
    Ok(rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(wiring: SrmWiring) -> TrainConfig {
        TrainConfig {
            env: EnvConfig::toy(),
            reward: RewardParams::default(),
            constraints: ConstraintParams::default(),
            srm: SrmConfig {
                n_learnable: 2,
                encoder: crate::srm::EncoderConfig {
                    d_model: 16,
                    layers: 1,
                    ..Default::default()
                },
                adapter: crate::srm::AdapterConfig {
                    d_align: 8,
                    hidden: vec![16],
                },
                ..SrmConfig::default()
            },
            sac: SacConfig {
                actor_hidden: vec![16],
                critic_hidden: vec![16],
                batch_size: 8,
                warmup_iterations: 8,
                iterations: 30,
                episode_len: 10,
                adapter_pairs: 16,
                adapter_epochs: 2,
                ..SacConfig::default()
            },
            wiring,
            seed: 9,
        }
    }

    #[test]
    fn every_wiring_trains_briefly() {
        for w in [
            SrmWiring::DualPromptKd,
            SrmWiring::DomainPromptOnly,
            SrmWiring::LearnablePromptOnly,
            SrmWiring::DomainEncoderRaw,
            SrmWiring::Bypass,
        ] {
            let mut t = Trainer::new(tiny(w), TrainerOptions::default()).unwrap();
            let out = t.train().unwrap();
            assert_eq!(out.iterations, 30);
            assert_eq!(t.metrics().len(), 30);
            let last = t.metrics().last().unwrap();
            assert!(last.critic_loss.is_some());
            assert_eq!(last.prompt_loss.is_some(), w.uses_learnable_prompts(), "{:?}", w);
            assert_eq!(last.distill_loss.is_some(), w == SrmWiring::DualPromptKd);
            assert!(t.metrics().iter().all(|r| r.capacity_ok && r.team_reward.is_finite()));
            assert_eq!(t.metrics().iter().filter(|r| r.done).count(), 3);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut a = Trainer::new(tiny(SrmWiring::DualPromptKd), TrainerOptions::default()).unwrap();
        for _ in 0..12 {
            a.step().unwrap();
        }
        let ck = a.checkpoint().unwrap();
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        let loaded = Checkpoint::read_from(bytes.as_slice()).unwrap();
        let mut b = Trainer::new(tiny(SrmWiring::DualPromptKd), TrainerOptions::default()).unwrap();
        b.restore(&loaded).unwrap();
        assert_eq!(b.iteration(), 12);
        assert_eq!(b.srm.prompts.param.value, a.srm.prompts.param.value);
        assert_eq!(b.critic.opt.steps(), a.critic.opt.steps());
        assert_eq!(b.rng.get_word_pos(), a.rng.get_word_pos());
        assert_eq!(b.env.rng().get_word_pos(), a.env.rng().get_word_pos());
        for (x, y) in a.agents.iter().zip(&b.agents) {
            assert!(x.actor.params().zip(y.actor.params()).all(|(p, q)| p.value == q.value));
        }
    }

    #[test]
    fn csv_has_one_line_per_iteration() {
        let mut t = Trainer::new(tiny(SrmWiring::Bypass), TrainerOptions::default()).unwrap();
        t.step().unwrap();
        let csv = t.metrics_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
    }
}
