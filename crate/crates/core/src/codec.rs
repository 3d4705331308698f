//! Action codec: maps continuous actor outputs to feasible discrete
//! allocations, audits the allocation constraints, evaluates the weighted
//! slice utility, and provides an exhaustive oracle for tiny instances.
//!
//! An allocation is a pair of binary matrices: `b` (slice × RB, inter-slice
//! partition) and `e` (UE × RB, intra-slice assignment).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{DuState, SliceId, NUM_SLICES};
use crate::numerics::softmax;

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("raw actor output has {found} entries, expected {expected}")]
    RawShape { expected: usize, found: usize },
    #[error("instance too large for exhaustive search: {rbs} RBs, {ues} UEs (max 6 RBs, 4 UEs)")]
    InstanceTooLarge { rbs: usize, ues: usize },
    #[error("invalid constraint parameters: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl BinaryMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.bits[r * self.cols + c] = v;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn row_count(&self, r: usize) -> usize {
        (0..self.cols).filter(|c| self.get(r, *c)).count()
    }

    pub fn col_count(&self, c: usize) -> usize {
        (0..self.rows).filter(|r| self.get(*r, c)).count()
    }

    fn as_f64(&self) -> impl Iterator<Item = f64> + '_ {
        self.bits.iter().map(|b| if *b { 1.0 } else { 0.0 })
    }
}

/// One DU's allocation decision.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationAction {
    /// `b[l][k]`: RB `k` belongs to slice `l`.
    pub b: BinaryMatrix,
    /// `e[u][k]`: RB `k` is scheduled to UE slot `u`.
    pub e: BinaryMatrix,
}

impl AllocationAction {
    pub fn empty(ue_slots: usize, rbs: usize) -> Self {
        Self {
            b: BinaryMatrix::zeros(NUM_SLICES, rbs),
            e: BinaryMatrix::zeros(ue_slots, rbs),
        }
    }

    pub fn rbs(&self) -> usize {
        self.b.cols()
    }

    /// `b` rows followed by `e` rows, as 0/1 values.
    pub fn flatten(&self) -> Vec<f64> {
        self.b.as_f64().chain(self.e.as_f64()).collect()
    }

    pub fn flat_len(ue_slots: usize, rbs: usize) -> usize {
        (NUM_SLICES + ue_slots) * rbs
    }

    /// RBs per slice (`K_{l,m}`).
    pub fn slice_rbs(&self) -> [usize; NUM_SLICES] {
        let mut out = [0; NUM_SLICES];
        for (l, o) in out.iter_mut().enumerate() {
            *o = self.b.row_count(l);
        }
        out
    }

    /// Every scheduled (u, k) pair lies inside an RB owned by u's slice.
    pub fn is_consistent(&self, ue_slices: &[SliceId]) -> bool {
        for u in 0..self.e.rows() {
            for k in 0..self.e.cols() {
                if self.e.get(u, k) {
                    match ue_slices.get(u) {
                        Some(s) if self.b.get(s.index(), k) => {}
                        _ => return false,
                    }
                }
            }
        }
        true
    }

    /// `Σ_l Σ_u Σ_k e_{u,k}·b_{l,k}`.
    pub fn assignment_count(&self) -> usize {
        let mut total = 0;
        for k in 0..self.rbs() {
            let owners = self.b.col_count(k);
            total += owners * self.e.col_count(k);
        }
        total
    }
}

/// Continuous policy output for one DU before decoding.
#[derive(Clone, Debug, PartialEq)]
pub struct RawActorOutput {
    pub logits_b: [f64; NUM_SLICES],
    /// Row-major `[ue_slots, rbs]` affinity scores.
    pub logits_e: Vec<f64>,
    pub ue_slots: usize,
    pub rbs: usize,
}

impl RawActorOutput {
    pub fn dim(ue_slots: usize, rbs: usize) -> usize {
        NUM_SLICES + ue_slots * rbs
    }

    /// Splits a flat actor output `[logits_b (3), logits_e (slots·rbs)]`.
    pub fn from_flat(flat: &[f64], ue_slots: usize, rbs: usize) -> Result<Self, CodecError> {
        let expected = Self::dim(ue_slots, rbs);
        if flat.len() != expected {
            return Err(CodecError::RawShape {
                expected,
                found: flat.len(),
            });
        }
        Ok(Self {
            logits_b: [flat[0], flat[1], flat[2]],
            logits_e: flat[NUM_SLICES..].to_vec(),
            ue_slots,
            rbs,
        })
    }

    fn affinity(&self, u: usize, k: usize) -> f64 {
        self.logits_e[u * self.rbs + k]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintParams {
    /// Sharing relaxation `λ_l` in [0, 1].
    pub lambda_share: [f64; NUM_SLICES],
    /// QoS floors `Q_min,l` (larger-is-better units).
    pub q_min: [f64; NUM_SLICES],
    /// Slack `δ_l` on the QoS floors.
    pub delta_slack: [f64; NUM_SLICES],
    /// Utility saturation targets (larger-is-better units).
    pub q_target: [f64; NUM_SLICES],
    /// Priority weights `w_l`, summing to one.
    pub weights: [f64; NUM_SLICES],
}

impl Default for ConstraintParams {
    fn default() -> Self {
        Self {
            lambda_share: [0.0; NUM_SLICES],
            q_min: [4e6, 6e6, 0.035],
            delta_slack: [4e5, 6e5, 0.005],
            q_target: [4e6, 6e6, 0.035],
            weights: [0.3, 0.3, 0.4],
        }
    }
}

impl ConstraintParams {
    pub fn validate(&self) -> Result<(), CodecError> {
        let bad = |m: &str| Err(CodecError::InvalidParams(m.to_string()));
        if self.lambda_share.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return bad("lambda_share must lie in [0, 1]");
        }
        if self.delta_slack.iter().any(|d| *d < 0.0) {
            return bad("delta_slack must be >= 0");
        }
        if self.q_target.iter().any(|t| *t <= 0.0) {
            return bad("q_target must be > 0");
        }
        if self.weights.iter().any(|w| *w < 0.0) || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("weights must be >= 0 and sum to 1");
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `total` seats by `shares`; ties go to
/// the lowest index.
fn largest_remainder(shares: &[f64], total: usize) -> Vec<usize> {
    let quotas: Vec<f64> = shares.iter().map(|s| s * total as f64).collect();
    let mut seats: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = seats.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        seats[i] += 1;
    }
    seats
}

/// Decodes raw actor scores into a feasible allocation.
///
/// 1. RBs are apportioned to slices by `softmax(logits_b)` with
///    largest-remainder rounding and laid out contiguously in slice order.
/// 2. Inside each slice, (UE, RB) pairs are visited by descending affinity
///    and each unclaimed RB goes to the first UE that wants it.
///
/// Ownership is exclusive, so the capacity constraint holds by construction.
pub fn decode_action(raw: &RawActorOutput, du: &DuState, _cp: &ConstraintParams) -> AllocationAction {
    let rbs = du.total_rbs;
    let slots = raw.ue_slots.max(du.ues.len());
    let mut action = AllocationAction::empty(slots, rbs);

    let shares = softmax(&raw.logits_b);
    let quota = largest_remainder(&shares, rbs);
    let mut start = 0;
    let mut slice_rbs: [Vec<usize>; NUM_SLICES] = Default::default();
    for (l, q) in quota.iter().enumerate() {
        for k in start..start + q {
            action.b.set(l, k, true);
            slice_rbs[l].push(k);
        }
        start += q;
    }

    for (l, rbs_l) in slice_rbs.iter().enumerate() {
        let members: Vec<usize> = du
            .ues
            .iter()
            .enumerate()
            .filter(|(_, ue)| ue.slice.index() == l)
            .map(|(u, _)| u)
            .collect();
        if members.is_empty() || rbs_l.is_empty() {
            continue;
        }
        let mut pairs: Vec<(usize, usize)> = members
            .iter()
            .flat_map(|&u| rbs_l.iter().map(move |&k| (u, k)))
            .collect();
        pairs.sort_by(|&(ua, ka), &(ub, kb)| {
            let sa = if ua < raw.ue_slots { raw.affinity(ua, ka) } else { 0.0 };
            let sb = if ub < raw.ue_slots { raw.affinity(ub, kb) } else { 0.0 };
            sb.partial_cmp(&sa)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(ua.cmp(&ub))
                .then(ka.cmp(&kb))
        });
        let mut taken = vec![false; rbs];
        for (u, k) in pairs {
            if !taken[k] {
                taken[k] = true;
                action.e.set(u, k, true);
            }
        }
    }
    action
}

/// Resource budget check: total scheduled (UE, RB, owning slice) triples `<= K_m`.
pub fn check_capacity(a: &AllocationAction, k_m: usize) -> bool {
    a.assignment_count() <= k_m
}

/// Slack of the conditional-sharing constraint for RB `k`:
/// `Σ_l b_{l,k} − (1 + λ·max(0, Σ_l b_{l,k} − 1))`; satisfied iff `<= 0`.
pub fn sharing_slack(a: &AllocationAction, k: usize, lambda: f64) -> f64 {
    let owners = a.b.col_count(k) as f64;
    owners - (1.0 + lambda * (owners - 1.0).max(0.0))
}

/// Sharing audit over every RB. Each RB uses the smallest `λ_l` among the
/// slices that hold it.
pub fn sharing_ok(a: &AllocationAction, cp: &ConstraintParams) -> bool {
    (0..a.rbs()).all(|k| {
        let lambda = (0..NUM_SLICES)
            .filter(|l| a.b.get(*l, k))
            .map(|l| cp.lambda_share[l])
            .fold(f64::INFINITY, f64::min);
        let lambda = if lambda.is_finite() { lambda } else { 0.0 };
        sharing_slack(a, k, lambda) <= 0.0
    })
}

/// Relaxed QoS floor per slice: `Q_l >= Q_min,l − δ_l`.
pub fn qos_slack_ok(q: &[f64; NUM_SLICES], cp: &ConstraintParams) -> [bool; NUM_SLICES] {
    let mut out = [false; NUM_SLICES];
    for l in 0..NUM_SLICES {
        out[l] = q[l] >= cp.q_min[l] - cp.delta_slack[l];
    }
    out
}

/// `Σ_l w_l · min(Q_l / Q_target,l, 1)`.
pub fn utility_objective(q: &[f64; NUM_SLICES], cp: &ConstraintParams) -> f64 {
    (0..NUM_SLICES)
        .map(|l| cp.weights[l] * (q[l] / cp.q_target[l]).min(1.0))
        .sum()
}

pub const BRUTE_FORCE_MAX_RBS: usize = 6;
pub const BRUTE_FORCE_MAX_UES: usize = 4;

/// Per-RB choices for exhaustive search: unowned, owned by a slice with no
/// UE scheduled, or owned by a slice and scheduled to one of its UEs.
fn rb_choices(du: &DuState, cp: &ConstraintParams) -> Vec<(Vec<usize>, Option<usize>)> {
    let mut owner_sets: Vec<Vec<usize>> = vec![vec![]];
    for mask in 1u32..(1 << NUM_SLICES) {
        let set: Vec<usize> = (0..NUM_SLICES).filter(|l| mask & (1 << l) != 0).collect();
        let lambda = set.iter().map(|l| cp.lambda_share[*l]).fold(f64::INFINITY, f64::min);
        let n = set.len() as f64;
        if n - (1.0 + lambda * (n - 1.0).max(0.0)) <= 0.0 {
            owner_sets.push(set);
        }
    }
    let mut choices = Vec::new();
    for set in owner_sets {
        choices.push((set.clone(), None));
        for (u, ue) in du.ues.iter().enumerate() {
            if set.contains(&ue.slice.index()) {
                choices.push((set.clone(), Some(u)));
            }
        }
    }
    choices
}

/// Number of allocations [`brute_force_alloc`] enumerates for `du`.
pub fn feasible_allocation_count(du: &DuState, cp: &ConstraintParams) -> usize {
    rb_choices(du, cp).len().pow(du.total_rbs as u32)
}

/// Exhaustive search over feasible allocations (exclusive or λ-relaxed
/// ownership per RB, at most one UE per RB, UEs only on their slice's RBs),
/// returning the evaluator's maximiser. Ties keep the lexicographically first
/// allocation in enumeration order.
pub fn brute_force_alloc<F>(
    du: &DuState,
    cp: &ConstraintParams,
    mut evaluate: F,
) -> Result<(AllocationAction, f64), CodecError>
where
    F: FnMut(&AllocationAction) -> f64,
{
    let rbs = du.total_rbs;
    let ues = du.ues.len();
    if rbs > BRUTE_FORCE_MAX_RBS || ues > BRUTE_FORCE_MAX_UES {
        return Err(CodecError::InstanceTooLarge { rbs, ues });
    }
    let choices = rb_choices(du, cp);
    let radix = choices.len();
    let mut digits = vec![0usize; rbs];
    let mut best: Option<(AllocationAction, f64)> = None;
    loop {
        let mut a = AllocationAction::empty(ues, rbs);
        for (k, &d) in digits.iter().enumerate() {
            let (owners, ue) = &choices[d];
            for l in owners {
                a.b.set(*l, k, true);
            }
            if let Some(u) = ue {
                a.e.set(*u, k, true);
            }
        }
        if check_capacity(&a, rbs) {
            let v = evaluate(&a);
            if best.as_ref().is_none_or(|(_, bv)| v > *bv) {
                best = Some((a, v));
            }
        }
        // Mixed-radix increment, most significant digit first.
        let mut pos = rbs;
        loop {
            if pos == 0 {
                return Ok(best.expect("the empty allocation is always feasible"));
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < radix {
                break;
            }
            digits[pos] = 0;
        }
    }
}
