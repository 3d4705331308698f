use serde::{Deserialize, Serialize};

use super::EnvError;

/// Inter-cell interference model applied per (UE, RB).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum InterferenceModel {
    None,
    Constant { power_dbm: f64 },
    LogNormal { mean_dbm: f64, sigma_db: f64 },
}

impl Default for InterferenceModel {
    fn default() -> Self {
        InterferenceModel::LogNormal {
            mean_dbm: -95.0,
            sigma_db: 6.0,
        }
    }
}

/// Radio environment parameters. Powers are given in dBm at this boundary and
/// converted to watts internally.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Number of DUs (one agent each).
    pub n_du: usize,
    /// Total UEs across all DUs, associated round-robin.
    pub n_ue: usize,
    /// RBs per DU (`K_m`).
    pub rbs_per_du: usize,
    /// Half-width of the square cell around each DU, meters.
    pub cell_radius_m: f64,
    /// Distances below this are clamped before applying path loss.
    pub min_distance_m: f64,
    pub bandwidth_hz: f64,
    pub rb_bandwidth_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub noise_density_dbm_hz: f64,
    pub noise_figure_db: f64,
    /// Transmit power per RB, dBm.
    pub tx_power_dbm: f64,
    pub interference: InterferenceModel,
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,
    /// Per-step probability of drawing a new heading.
    pub p_turn: f64,
    /// Decision epoch length, seconds.
    pub epoch_s: f64,
    /// Fading re-draws per epoch; slice QoS is averaged over them.
    pub intervals_per_epoch: usize,
    /// Constant-bit-rate arrivals per UE, by slice [eMBB, mMTC, URLLC], bits/s.
    pub traffic_bps: [f64; 3],
    /// Minimum-rate threshold `λ_i` per slice, bits/s.
    pub min_rate_bps: [f64; 3],
    pub frame_delay_s: f64,
    /// Queue capacity per UE as seconds of its arrival rate; excess is dropped.
    pub buffer_s: f64,
    /// Worst-case latency reported for starved or empty URLLC slices.
    pub latency_cap_s: f64,
    /// Rate floor used by the latency model, bits/s.
    pub rate_floor_bps: f64,
    /// Explicit UE→slice mapping (cycled); defaults to eMBB, mMTC, URLLC.
    pub slice_pattern: Vec<u8>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            n_du: 2,
            n_ue: 20,
            rbs_per_du: 12,
            cell_radius_m: 250.0,
            min_distance_m: 10.0,
            bandwidth_hz: 20e6,
            rb_bandwidth_hz: 200e3,
            subcarrier_spacing_hz: 15e3,
            noise_density_dbm_hz: -174.0,
            noise_figure_db: 9.0,
            tx_power_dbm: 56.0,
            interference: InterferenceModel::default(),
            speed_min_mps: 10.0,
            speed_max_mps: 20.0,
            p_turn: 0.1,
            epoch_s: 0.1,
            intervals_per_epoch: 4,
            traffic_bps: [4e6, 2e5, 1e6],
            min_rate_bps: [1e6, 5e5, 5e5],
            frame_delay_s: 1e-3,
            buffer_s: 0.1,
            latency_cap_s: 0.05,
            rate_floor_bps: 1.0,
            slice_pattern: vec![1, 2, 3],
        }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl EnvConfig {
    /// `N_m = 6`, `N_u = 200`, 100 RBs per 20 MHz DU.
    pub fn paper_scale() -> Self {
        Self {
            n_du: 6,
            n_ue: 200,
            rbs_per_du: 100,
            ..Self::default()
        }
    }

    /// One DU, two RBs, two UEs.
    pub fn toy() -> Self {
        Self {
            n_du: 1,
            n_ue: 2,
            rbs_per_du: 2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |msg: String| Err(EnvError::InvalidConfig(msg));
        if self.n_du == 0 {
            return bad("n_du must be positive".into());
        }
        if self.rbs_per_du == 0 {
            return bad("rbs_per_du must be positive".into());
        }
        if self.rbs_per_du as f64 * self.rb_bandwidth_hz > self.bandwidth_hz + 1e-6 {
            return bad(format!(
                "{} RBs of {} Hz exceed the {} Hz DU bandwidth",
                self.rbs_per_du, self.rb_bandwidth_hz, self.bandwidth_hz
            ));
        }
        if !(self.rb_bandwidth_hz > 0.0 && self.subcarrier_spacing_hz > 0.0) {
            return bad("bandwidths must be positive".into());
        }
        if !(self.cell_radius_m > 0.0 && self.min_distance_m > 0.0) {
            return bad("cell geometry must be positive".into());
        }
        if !(self.speed_min_mps > 0.0 && self.speed_min_mps <= self.speed_max_mps) {
            return bad("speed range must satisfy 0 < min <= max".into());
        }
        if !(0.0..=1.0).contains(&self.p_turn) {
            return bad("p_turn must be a probability".into());
        }
        if !(self.epoch_s > 0.0) || self.intervals_per_epoch == 0 {
            return bad("epoch length and interval count must be positive".into());
        }
        if self.traffic_bps.iter().any(|v| *v < 0.0) || self.min_rate_bps.iter().any(|v| *v <= 0.0) {
            return bad("traffic must be >= 0 and min-rate thresholds > 0".into());
        }
        if !(self.latency_cap_s > 0.0 && self.rate_floor_bps > 0.0 && self.frame_delay_s >= 0.0 && self.buffer_s >= 0.0) {
            return bad("latency parameters must be positive".into());
        }
        if self.slice_pattern.is_empty() || self.slice_pattern.iter().any(|s| !(1..=3).contains(s)) {
            return bad("slice_pattern entries must be 1, 2 or 3".into());
        }
        if let InterferenceModel::LogNormal { sigma_db, .. } = self.interference {
            if sigma_db < 0.0 {
                return bad("interference sigma must be >= 0".into());
            }
        }
        Ok(())
    }

    pub fn noise_variance_w(&self) -> f64 {
        dbm_to_watts(self.noise_density_dbm_hz + 10.0 * self.rb_bandwidth_hz.log10() + self.noise_figure_db)
    }

    pub fn tx_power_w(&self) -> f64 {
        dbm_to_watts(self.tx_power_dbm)
    }

    /// UE slots per DU; DUs with fewer UEs leave trailing slots empty.
    pub fn ue_slots(&self) -> usize {
        self.n_ue.div_ceil(self.n_du).max(1)
    }

    pub fn interval_s(&self) -> f64 {
        self.epoch_s / self.intervals_per_epoch as f64
    }
}
