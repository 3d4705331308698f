use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::SrmError;
use crate::env::{AgentObservation, DuReport, EnvConfig, NUM_SLICES};

pub const PAD: &str = "PAD";
const LOAD: [&str; 3] = ["LOAD_LOW", "LOAD_MED", "LOAD_HIGH"];
const VIOLATION: [&str; NUM_SLICES] = ["EMBB_VIOLATION", "MMTC_VIOLATION", "URLLC_VIOLATION"];
const CONGESTED: [&str; NUM_SLICES] = ["EMBB_CONGESTED", "MMTC_CONGESTED", "URLLC_CONGESTED"];
const PRIORITY: [&str; NUM_SLICES] = ["PRIORITY_EMBB", "PRIORITY_MMTC", "PRIORITY_URLLC"];
const TREND: [&str; 3] = ["TREND_RISING", "TREND_FALLING", "TREND_FLAT"];

/// Bijective token string ↔ id table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct PromptVocab {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl PromptVocab {
    pub fn new(tokens: Vec<String>) -> Result<Self, SrmError> {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i).is_some() {
                return Err(SrmError::Vocab(format!("duplicate token `{}`", t)));
            }
        }
        let vocab = Self { tokens, ids };
        for t in std::iter::once(PAD)
            .chain(LOAD)
            .chain(VIOLATION)
            .chain(CONGESTED)
            .chain(PRIORITY)
            .chain(TREND)
        {
            vocab.id(t)?;
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Result<usize, SrmError> {
        self.ids
            .get(token)
            .copied()
            .ok_or_else(|| SrmError::Vocab(format!("missing token `{}`", token)))
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<&str> {
        ids.iter().map(|i| self.token(*i).unwrap_or("?")).collect()
    }
}

impl Default for PromptVocab {
    fn default() -> Self {
        let tokens = std::iter::once(PAD)
            .chain(LOAD)
            .chain(VIOLATION)
            .chain(CONGESTED)
            .chain(PRIORITY)
            .chain(TREND)
            .map(String::from)
            .collect();
        Self::new(tokens).expect("built-in vocabulary is complete")
    }
}

impl TryFrom<Vec<String>> for PromptVocab {
    type Error = SrmError;
    fn try_from(tokens: Vec<String>) -> Result<Self, SrmError> {
        Self::new(tokens)
    }
}

impl From<PromptVocab> for Vec<String> {
    fn from(v: PromptVocab) -> Self {
        v.tokens
    }
}

/// Thresholds of the rule table that turns telemetry into a domain prompt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptRules {
    pub prompt_len: usize,
    /// RB utilisation below this is `LOAD_LOW`.
    pub load_low: f64,
    /// RB utilisation above this is `LOAD_HIGH`.
    pub load_high: f64,
    /// Relative QoS change beyond which a trend is rising or falling.
    pub trend_rel: f64,
    /// Per-slice targets in larger-is-better units.
    pub targets: [f64; NUM_SLICES],
    /// Per-UE backlog, in seconds of arrivals, that marks a slice congested.
    pub congestion_s: f64,
}

impl Default for PromptRules {
    fn default() -> Self {
        Self {
            prompt_len: 16,
            load_low: 0.35,
            load_high: 0.85,
            trend_rel: 0.05,
            targets: [4e6, 6e6, 0.035],
            congestion_s: 0.05,
        }
    }
}

/// Telemetry the rule table reads for one DU.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainTelemetry {
    pub q_bar: [f64; NUM_SLICES],
    pub prev_q_bar: [f64; NUM_SLICES],
    pub rb_utilization: f64,
    /// Mean per-UE backlog per slice, in seconds of arrivals.
    pub backlog_s: [f64; NUM_SLICES],
}

impl DomainTelemetry {
    pub fn from_report(r: &DuReport, cfg: &EnvConfig) -> Self {
        let backlog_s = std::array::from_fn(|l| {
            let load = cfg.traffic_bps[l] * r.active_ues[l] as f64;
            if load > 0.0 {
                r.backlog_bits[l] / load
            } else {
                0.0
            }
        });
        Self {
            q_bar: r.q_bar,
            prev_q_bar: r.prev_q_bar,
            rb_utilization: r.rb_utilization,
            backlog_s,
        }
    }

    /// Telemetry available before the first epoch: flat history, no backlog.
    pub fn from_observation(obs: &AgentObservation, cfg: &EnvConfig) -> Self {
        let q_bar = crate::env::invert_latency(&obs.qos, cfg.latency_cap_s);
        let rbs = cfg.rbs_per_du;
        let e = &obs.prev_action[NUM_SLICES * rbs..];
        let used = (0..rbs)
            .filter(|k| (0..obs.ue_slots).any(|u| e[u * rbs + k] > 0.5))
            .count();
        Self {
            q_bar,
            prev_q_bar: q_bar,
            rb_utilization: used as f64 / rbs as f64,
            backlog_s: [0.0; NUM_SLICES],
        }
    }
}

fn trend(q: f64, prev: f64, rel: f64) -> usize {
    let change = (q - prev) / prev.abs().max(1e-12);
    if change > rel {
        0
    } else if change < -rel {
        1
    } else {
        2
    }
}

/// Rule-based domain prompt, padded to `rules.prompt_len`:
/// `[LOAD_*, *_VIOLATION.., *_CONGESTED.., PRIORITY_* (worst deficit),
/// TREND_* per slice, PAD..]`.
pub fn generate_domain_prompt(t: &DomainTelemetry, rules: &PromptRules, vocab: &PromptVocab) -> Result<Vec<usize>, SrmError> {
    let mut out = Vec::with_capacity(rules.prompt_len);
    let load = if t.rb_utilization < rules.load_low {
        0
    } else if t.rb_utilization > rules.load_high {
        2
    } else {
        1
    };
    out.push(vocab.id(LOAD[load])?);

    let mut worst: Option<(usize, f64)> = None;
    for l in 0..NUM_SLICES {
        if t.q_bar[l] < rules.targets[l] {
            out.push(vocab.id(VIOLATION[l])?);
            let deficit = (rules.targets[l] - t.q_bar[l]) / rules.targets[l];
            if worst.is_none_or(|(_, d)| deficit > d) {
                worst = Some((l, deficit));
            }
        }
    }
    for l in 0..NUM_SLICES {
        if t.backlog_s[l] > rules.congestion_s {
            out.push(vocab.id(CONGESTED[l])?);
        }
    }
    if let Some((l, _)) = worst {
        out.push(vocab.id(PRIORITY[l])?);
    }
    for l in 0..NUM_SLICES {
        out.push(vocab.id(TREND[trend(t.q_bar[l], t.prev_q_bar[l], rules.trend_rel)])?);
    }
    if out.len() > rules.prompt_len {
        return Err(SrmError::Vocab(format!(
            "prompt needs {} tokens but prompt_len is {}",
            out.len(),
            rules.prompt_len
        )));
    }
    out.resize(rules.prompt_len, vocab.id(PAD)?);
    Ok(out)
}
