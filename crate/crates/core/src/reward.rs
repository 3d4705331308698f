//! Per-epoch reward from larger-is-better slice QoS: a piecewise base
//! reward per slice, sigmoid aggregation, and an exponential penalty for
//! slices far below threshold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::NUM_SLICES;
use crate::numerics::sigmoid;

#[derive(Debug, Error, PartialEq)]
#[error("invalid reward parameters: {0}")]
pub struct RewardParamsError(String);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardParams {
    /// Per-slice threshold in the slice's larger-is-better units.
    pub thr: [f64; NUM_SLICES],
    pub margin: f64,
    pub alpha_r: f64,
    pub beta_r: f64,
    pub gamma_r: f64,
    pub delta_r: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            thr: [4e6, 6e6, 0.035],
            margin: 0.2,
            alpha_r: 1.0,
            beta_r: 0.5,
            gamma_r: 2.0,
            delta_r: 1.0,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<(), RewardParamsError> {
        if self.thr.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(RewardParamsError("thr must be positive and finite".into()));
        }
        if !(0.0..1.0).contains(&self.margin) {
            return Err(RewardParamsError("margin must lie in [0, 1)".into()));
        }
        for (name, v) in [
            ("alpha_r", self.alpha_r),
            ("beta_r", self.beta_r),
            ("gamma_r", self.gamma_r),
            ("delta_r", self.delta_r),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(RewardParamsError(format!("{} must be positive", name)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r0: [f64; NUM_SLICES],
    pub r_q: f64,
    pub r_ng: f64,
    pub r_t: f64,
}

/// `1 + β_r(q − thr)/thr` at or above threshold, `exp(−γ_r(thr − q)/thr)` below.
pub fn slice_base_reward(q_bar: f64, thr: f64, beta_r: f64, gamma_r: f64) -> f64 {
    if q_bar >= thr {
        1.0 + beta_r * (q_bar - thr) / thr
    } else {
        (-gamma_r * (thr - q_bar) / thr).exp()
    }
}

/// `Σ_l sigmoid(α_r · r0_l)`.
pub fn aggregate_reward(r0: &[f64; NUM_SLICES], alpha_r: f64) -> f64 {
    r0.iter().map(|r| sigmoid(alpha_r * r)).sum()
}

fn penalty_term(q_bar: f64, thr: f64, p: &RewardParams) -> f64 {
    if q_bar < thr * (1.0 - p.margin) {
        (-p.delta_r * (q_bar - thr) / thr).exp()
    } else {
        0.0
    }
}

/// `Σ_{l : Q̄_l < thr_l(1 − margin)} exp(−δ_r(Q̄_l − thr_l)/thr_l)`.
pub fn underperformance_penalty(q_bars: &[f64; NUM_SLICES], p: &RewardParams) -> f64 {
    (0..NUM_SLICES).map(|l| penalty_term(q_bars[l], p.thr[l], p)).sum()
}

pub fn total_reward(q_bars: &[f64; NUM_SLICES], p: &RewardParams) -> RewardBreakdown {
    let r0: [f64; NUM_SLICES] = std::array::from_fn(|l| slice_base_reward(q_bars[l], p.thr[l], p.beta_r, p.gamma_r));
    let r_q = aggregate_reward(&r0, p.alpha_r);
    let r_ng = underperformance_penalty(q_bars, p);
    RewardBreakdown {
        r0,
        r_q,
        r_ng,
        r_t: r_q - r_ng,
    }
}
