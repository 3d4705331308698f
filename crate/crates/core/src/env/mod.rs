//! Three-slice radio environment: UE mobility, Rayleigh-faded channels,
//! per-RB Shannon rates, a queue-drain latency model and per-slice QoS.
//!
//! One [`Environment::step`] is a 100 ms decision epoch. Within it the channel
//! is redrawn `intervals_per_epoch` times and QoS is averaged over those draws.

mod channel;
mod config;
mod mobility;
mod qos;
mod telemetry;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{check_capacity, AllocationAction};

pub use channel::{compute_rate, pathloss_gain, sample_channel};
pub use config::{dbm_to_watts, EnvConfig, InterferenceModel};
pub use mobility::{step_mobility, HEADINGS};
pub use qos::{compute_latency, qos_embb, qos_mmtc, qos_urllc, qos_vector};
pub use telemetry::{telemetry_header, telemetry_rows};

pub const NUM_SLICES: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("slice {0:?} has no UEs")]
    EmptySlice(SliceId),
    #[error("{rates} rates but {thresholds} thresholds")]
    LengthMismatch { rates: usize, thresholds: usize },
    #[error("invalid action for DU {du}: {reason}")]
    InvalidAction { du: usize, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SliceId {
    Embb = 1,
    Mmtc = 2,
    Urllc = 3,
}

impl SliceId {
    pub const ALL: [SliceId; NUM_SLICES] = [SliceId::Embb, SliceId::Mmtc, SliceId::Urllc];

    /// Zero-based position in the QoS vector.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(SliceId::Embb),
            2 => Some(SliceId::Mmtc),
            3 => Some(SliceId::Urllc),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SliceId::Embb => "eMBB",
            SliceId::Mmtc => "mMTC",
            SliceId::Urllc => "URLLC",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ue {
    pub id: usize,
    pub slice: SliceId,
    /// Meters, relative to the serving DU.
    pub position: [f64; 2],
    pub speed: f64,
    /// One of [`HEADINGS`], measured against the current x direction.
    pub heading: f64,
    /// +1 or -1; flipped by reflections off the left/right cell walls.
    pub dir_x: f64,
    pub min_rate_bps: f64,
    pub latency_s: f64,
    pub queue_bits: f64,
}

impl Ue {
    /// A UE at `position` moving along +x at 10 m/s with an empty queue.
    pub fn new(id: usize, slice: SliceId, position: [f64; 2], min_rate_bps: f64) -> Self {
        Self {
            id,
            slice,
            position,
            speed: 10.0,
            heading: 0.0,
            dir_x: 1.0,
            min_rate_bps,
            latency_s: 0.0,
            queue_bits: 0.0,
        }
    }

    pub fn distance(&self) -> f64 {
        self.position[0].hypot(self.position[1])
    }
}

/// Per-(UE, RB) radio conditions for one DU, row-major `[ue, rb]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub n_ues: usize,
    pub rbs: usize,
    pub gain: Vec<f64>,
    /// Watts.
    pub interference: Vec<f64>,
    /// Watts.
    pub noise_variance: f64,
    /// Hertz.
    pub rb_bandwidth: f64,
    /// Watts per RB.
    pub tx_power: Vec<f64>,
}

impl ChannelState {
    pub fn flat(
        n_ues: usize,
        rbs: usize,
        gain: f64,
        interference: f64,
        noise_variance: f64,
        rb_bandwidth: f64,
        tx_power: f64,
    ) -> Self {
        Self {
            n_ues,
            rbs,
            gain: vec![gain; n_ues * rbs],
            interference: vec![interference; n_ues * rbs],
            noise_variance,
            rb_bandwidth,
            tx_power: vec![tx_power; rbs],
        }
    }

    pub fn sinr(&self, u: usize, k: usize) -> f64 {
        let i = u * self.rbs + k;
        self.tx_power[k] * self.gain[i] / (self.interference[i] + self.noise_variance)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DuState {
    pub du_id: usize,
    pub total_rbs: usize,
    pub per_slice_rbs: [usize; NUM_SLICES],
    pub ues: Vec<Ue>,
    pub channel: ChannelState,
}

impl DuState {
    pub fn active_ues(&self) -> [usize; NUM_SLICES] {
        let mut out = [0; NUM_SLICES];
        for ue in &self.ues {
            out[ue.slice.index()] += 1;
        }
        out
    }

    pub fn ue_slices(&self) -> Vec<SliceId> {
        self.ues.iter().map(|u| u.slice).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub epoch: u64,
    pub dus: Vec<DuState>,
    /// Epoch-averaged `[μ_r, d_s, l_d]` per DU.
    pub qos: Vec<[f64; NUM_SLICES]>,
    pub last_actions: Vec<AllocationAction>,
    pub rng_seed: u64,
}

/// Local MDP state of one DU.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentObservation {
    pub du_id: usize,
    /// `[μ_r, d_s, l_d]`.
    pub qos: [f64; NUM_SLICES],
    pub active_ues: [usize; NUM_SLICES],
    /// Previous allocation, `b` rows then `e` rows.
    pub prev_action: Vec<f64>,
    pub ue_slots: usize,
}

impl AgentObservation {
    pub fn feature_dim(ue_slots: usize, rbs: usize) -> usize {
        2 * NUM_SLICES + AllocationAction::flat_len(ue_slots, rbs)
    }

    /// Network input: QoS divided by `qos_scale`, UE counts divided by the
    /// slot count, then the previous allocation.
    pub fn features(&self, qos_scale: &[f64; NUM_SLICES]) -> Vec<f64> {
        let slots = self.ue_slots.max(1) as f64;
        let mut out = Vec::with_capacity(2 * NUM_SLICES + self.prev_action.len());
        out.extend((0..NUM_SLICES).map(|l| self.qos[l] / qos_scale[l]));
        out.extend(self.active_ues.iter().map(|n| *n as f64 / slots));
        out.extend_from_slice(&self.prev_action);
        out
    }
}

/// Per-DU outcome of one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct DuReport {
    pub du_id: usize,
    /// Epoch mean of `[μ_r, d_s, l_d]`.
    pub q: [f64; NUM_SLICES],
    /// Larger-is-better form: `[μ_r, d_s, max(cap − l_d, 0)]`.
    pub q_bar: [f64; NUM_SLICES],
    pub prev_q_bar: [f64; NUM_SLICES],
    /// Epoch-mean rate per UE, bits/s.
    pub ue_rates: Vec<f64>,
    pub ue_latency: Vec<f64>,
    pub ue_slices: Vec<SliceId>,
    /// Fraction of RBs scheduled to some UE.
    pub rb_utilization: f64,
    pub backlog_bits: [f64; NUM_SLICES],
    pub active_ues: [usize; NUM_SLICES],
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub observations: Vec<AgentObservation>,
    pub reports: Vec<DuReport>,
}

/// Larger-is-better QoS: the latency entry becomes `max(cap − l_d, 0)`.
pub fn invert_latency(q: &[f64; NUM_SLICES], latency_cap_s: f64) -> [f64; NUM_SLICES] {
    [q[0], q[1], (latency_cap_s - q[2]).max(0.0)]
}

fn draw_ue<R: Rng + ?Sized>(cfg: &EnvConfig, id: usize, slice: SliceId, rng: &mut R) -> Ue {
    let r = cfg.cell_radius_m;
    let position = [rng.random_range(-r..=r), rng.random_range(-r..=r)];
    let mut ue = Ue::new(id, slice, position, cfg.min_rate_bps[slice.index()]);
    ue.speed = rng.random_range(cfg.speed_min_mps..=cfg.speed_max_mps);
    ue.heading = HEADINGS[rng.random_range(0..HEADINGS.len())];
    ue.dir_x = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    ue
}

/// Fresh network: UEs assigned round-robin to DUs, slices cycled from
/// `slice_pattern`, uniform positions, speeds and headings.
pub fn initial_state<R: Rng + ?Sized>(cfg: &EnvConfig, seed: u64, rng: &mut R) -> Result<NetworkState, EnvError> {
    cfg.validate()?;
    let slots = cfg.ue_slots();
    let mut dus: Vec<DuState> = (0..cfg.n_du)
        .map(|m| DuState {
            du_id: m,
            total_rbs: cfg.rbs_per_du,
            per_slice_rbs: [0; NUM_SLICES],
            ues: Vec::new(),
            channel: ChannelState::flat(0, cfg.rbs_per_du, 0.0, 0.0, cfg.noise_variance_w(), cfg.rb_bandwidth_hz, cfg.tx_power_w()),
        })
        .collect();
    for i in 0..cfg.n_ue {
        let slice = SliceId::from_id(cfg.slice_pattern[i % cfg.slice_pattern.len()])
            .ok_or_else(|| EnvError::InvalidConfig("bad slice id".into()))?;
        let ue = draw_ue(cfg, i, slice, rng);
        dus[i % cfg.n_du].ues.push(ue);
    }
    for du in &mut dus {
        du.channel = sample_channel(du, cfg, rng);
    }
    let n = dus.len();
    Ok(NetworkState {
        epoch: 0,
        dus,
        qos: vec![[0.0, 0.0, cfg.latency_cap_s]; n],
        last_actions: vec![AllocationAction::empty(slots, cfg.rbs_per_du); n],
        rng_seed: seed,
    })
}

fn validate_action(du: &DuState, slots: usize, a: &AllocationAction) -> Result<(), EnvError> {
    let k = du.total_rbs;
    if a.b.rows() != NUM_SLICES || a.b.cols() != k || a.e.cols() != k || a.e.rows() != slots {
        return Err(EnvError::DimensionMismatch(format!(
            "DU {} expects b {}x{} and e {}x{}, got b {}x{} and e {}x{}",
            du.du_id,
            NUM_SLICES,
            k,
            slots,
            k,
            a.b.rows(),
            a.b.cols(),
            a.e.rows(),
            a.e.cols()
        )));
    }
    if !check_capacity(a, k) {
        return Err(EnvError::InvalidAction {
            du: du.du_id,
            reason: format!("{} assignments exceed {} RBs", a.assignment_count(), k),
        });
    }
    if !a.is_consistent(&du.ue_slices()) {
        return Err(EnvError::InvalidAction {
            du: du.du_id,
            reason: "a UE is scheduled outside its slice's RBs".into(),
        });
    }
    Ok(())
}

/// Advances the network by one epoch under `actions` (one per DU).
///
/// Mobility moves every UE by `epoch_s`; then for each scheduling interval the
/// channel is redrawn, rates and queues are updated and QoS is measured.
pub fn env_step<R: Rng + ?Sized>(
    cfg: &EnvConfig,
    state: &NetworkState,
    actions: &[AllocationAction],
    rng: &mut R,
) -> Result<(NetworkState, StepOutput), EnvError> {
    if actions.len() != state.dus.len() {
        return Err(EnvError::DimensionMismatch(format!(
            "{} actions for {} DUs",
            actions.len(),
            state.dus.len()
        )));
    }
    let slots = cfg.ue_slots();
    for (du, a) in state.dus.iter().zip(actions) {
        validate_action(du, slots, a)?;
    }

    let mut next = state.clone();
    step_mobility(&mut next, cfg, cfg.epoch_s, rng);

    let intervals = cfg.intervals_per_epoch;
    let dt = cfg.interval_s();
    let cap = cfg.latency_cap_s;
    let mut reports = Vec::with_capacity(next.dus.len());
    for (m, du) in next.dus.iter_mut().enumerate() {
        let a = &actions[m];
        du.per_slice_rbs = a.slice_rbs();
        let n = du.ues.len();
        let mut q_sum = [0.0; NUM_SLICES];
        let mut rate_sum = vec![0.0; n];
        let mut lat_sum = vec![0.0; n];
        for _ in 0..intervals {
            du.channel = sample_channel(du, cfg, rng);
            let mut rates = Vec::with_capacity(n);
            for u in 0..n {
                rates.push(compute_rate(du, u, &a.e, &a.b)?);
            }
            let mut latencies = Vec::with_capacity(n);
            for (u, ue) in du.ues.iter_mut().enumerate() {
                let queue = ue.queue_bits + cfg.traffic_bps[ue.slice.index()] * dt;
                let tau = compute_latency(queue, rates[u], cfg.rate_floor_bps, cfg.frame_delay_s);
                let buffer = cfg.traffic_bps[ue.slice.index()] * cfg.buffer_s;
                ue.queue_bits = (queue - rates[u] * dt).clamp(0.0, buffer);
                ue.latency_s = tau;
                latencies.push(tau);
            }
            let q = qos_vector(du, &rates, &latencies, cap)?;
            for l in 0..NUM_SLICES {
                q_sum[l] += q[l];
            }
            for u in 0..n {
                rate_sum[u] += rates[u];
                lat_sum[u] += latencies[u];
            }
        }
        let inv = 1.0 / intervals as f64;
        let q = q_sum.map(|v| v * inv);
        let mut backlog = [0.0; NUM_SLICES];
        for ue in &du.ues {
            backlog[ue.slice.index()] += ue.queue_bits;
        }
        let scheduled = (0..du.total_rbs).filter(|k| a.e.col_count(*k) > 0).count();
        reports.push(DuReport {
            du_id: du.du_id,
            q,
            q_bar: invert_latency(&q, cap),
            prev_q_bar: invert_latency(&state.qos[m], cap),
            ue_rates: rate_sum.iter().map(|r| r * inv).collect(),
            ue_latency: lat_sum.iter().map(|t| t * inv).collect(),
            ue_slices: du.ue_slices(),
            rb_utilization: scheduled as f64 / du.total_rbs as f64,
            backlog_bits: backlog,
            active_ues: du.active_ues(),
        });
        next.qos[m] = q;
        next.last_actions[m] = a.clone();
    }
    next.epoch += 1;
    let observations = observations(&next, slots);
    Ok((next, StepOutput { observations, reports }))
}

/// Larger-is-better QoS of `a` on the DU's current channel for one
/// scheduling interval, with queues as they stand. Nothing is mutated.
pub fn instant_qos(cfg: &EnvConfig, du: &DuState, a: &AllocationAction) -> Result<[f64; NUM_SLICES], EnvError> {
    let dt = cfg.interval_s();
    let mut rates = Vec::with_capacity(du.ues.len());
    let mut latencies = Vec::with_capacity(du.ues.len());
    for (u, ue) in du.ues.iter().enumerate() {
        let rate = compute_rate(du, u, &a.e, &a.b)?;
        let queue = ue.queue_bits + cfg.traffic_bps[ue.slice.index()] * dt;
        latencies.push(compute_latency(queue, rate, cfg.rate_floor_bps, cfg.frame_delay_s));
        rates.push(rate);
    }
    let q = qos_vector(du, &rates, &latencies, cfg.latency_cap_s)?;
    Ok(invert_latency(&q, cfg.latency_cap_s))
}

/// Current per-DU observations.
pub fn observations(state: &NetworkState, ue_slots: usize) -> Vec<AgentObservation> {
    state
        .dus
        .iter()
        .enumerate()
        .map(|(m, du)| AgentObservation {
            du_id: du.du_id,
            qos: state.qos[m],
            active_ues: du.active_ues(),
            prev_action: state.last_actions[m].flatten(),
            ue_slots,
        })
        .collect()
}

/// A seeded environment that owns its state and random stream.
#[derive(Clone, Debug)]
pub struct Environment {
    cfg: EnvConfig,
    state: NetworkState,
    rng: ChaCha8Rng,
}

impl Environment {
    pub fn new(cfg: EnvConfig, seed: u64) -> Result<Self, EnvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = initial_state(&cfg, seed, &mut rng)?;
        Ok(Self { cfg, state, rng })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    pub fn set_rng(&mut self, rng: ChaCha8Rng) {
        self.rng = rng;
    }

    pub fn ue_slots(&self) -> usize {
        self.cfg.ue_slots()
    }

    /// Redraws UE placement from the continuing random stream.
    pub fn reset(&mut self) -> Vec<AgentObservation> {
        let seed = self.state.rng_seed;
        self.state = initial_state(&self.cfg, seed, &mut self.rng).expect("config validated at construction");
        self.observations()
    }

    pub fn observations(&self) -> Vec<AgentObservation> {
        observations(&self.state, self.cfg.ue_slots())
    }

    pub fn step(&mut self, actions: &[AllocationAction]) -> Result<StepOutput, EnvError> {
        let (next, out) = env_step(&self.cfg, &self.state, actions, &mut self.rng)?;
        self.state = next;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_action(env: &Environment) -> Vec<AllocationAction> {
        env.state()
            .dus
            .iter()
            .map(|du| {
                let mut a = AllocationAction::empty(env.ue_slots(), du.total_rbs);
                for k in 0..du.total_rbs {
                    let u = k % du.ues.len();
                    a.b.set(du.ues[u].slice.index(), k, true);
                    a.e.set(u, k, true);
                }
                a
            })
            .collect()
    }

    #[test]
    fn identical_seeds_give_identical_trajectories() {
        let run = || {
            let mut env = Environment::new(EnvConfig::default(), 42).unwrap();
            let mut out = Vec::new();
            for _ in 0..50 {
                let a = full_action(&env);
                out.push(env.step(&a).unwrap().reports);
            }
            (out, env.state().clone())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn zero_allocation_yields_floor_qos() {
        let mut env = Environment::new(EnvConfig::default(), 1).unwrap();
        let a = vec![AllocationAction::empty(env.ue_slots(), 12); 2];
        let out = env.step(&a).unwrap();
        for r in &out.reports {
            assert!(r.ue_rates.iter().all(|v| *v == 0.0));
            assert_eq!(r.q, [0.0, 0.0, env.config().latency_cap_s]);
        }
    }

    #[test]
    fn observation_shape_is_constant() {
        let mut env = Environment::new(EnvConfig::default(), 5).unwrap();
        let dim = AgentObservation::feature_dim(env.ue_slots(), 12);
        for _ in 0..100 {
            let a = full_action(&env);
            let out = env.step(&a).unwrap();
            for o in &out.observations {
                let f = o.features(&[1e6, 1e6, 0.05]);
                assert_eq!(f.len(), dim);
                assert!(f.iter().all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn capacity_violation_is_rejected() {
        let mut env = Environment::new(EnvConfig::toy(), 3).unwrap();
        let mut a = AllocationAction::empty(2, 2);
        let s0 = env.state().dus[0].ues[0].slice.index();
        let s1 = env.state().dus[0].ues[1].slice.index();
        for k in 0..2 {
            a.b.set(s0, k, true);
            a.b.set(s1, k, true);
            a.e.set(0, k, true);
            a.e.set(1, k, true);
        }
        assert!(matches!(env.step(&[a]), Err(EnvError::InvalidAction { .. })));
    }
}
