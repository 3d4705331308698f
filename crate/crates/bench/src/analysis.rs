//! Statistics over run records: RPI, empirical CDFs, box-plot summaries,
//! moving averages and the aggregated sweep and ablation tables.

use std::collections::BTreeMap;

use oranguide_core::env::SliceId;

use crate::error::BenchError;
use crate::record::RunRecord;
use crate::variant::VariantId;

/// Minimum seeds per variant for a distribution summary.
pub const MIN_SEEDS: usize = 3;

/// `(acc_m - acc_b) / |acc_b|`.
pub fn rpi_from_totals(acc_method: f64, acc_baseline: f64) -> Result<f64, BenchError> {
    if acc_baseline == 0.0 || !acc_baseline.is_finite() || !acc_method.is_finite() {
        return Err(BenchError::Analysis(format!(
            "RPI undefined for baseline accumulated reward {}",
            acc_baseline
        )));
    }
    Ok((acc_method - acc_baseline) / acc_baseline.abs())
}

/// Relative performance improvement over the first `horizon` training steps.
pub fn compute_rpi(method: &RunRecord, baseline: &RunRecord, horizon: usize) -> Result<f64, BenchError> {
    let acc = |r: &RunRecord| {
        r.accumulated_over(horizon).ok_or_else(|| {
            BenchError::Analysis(format!(
                "{} seed {} covers {} steps, RPI horizon is {}",
                r.variant,
                r.seed,
                r.rewards.len(),
                horizon
            ))
        })
    };
    rpi_from_totals(acc(method)?, acc(baseline)?)
}

/// Right-continuous empirical CDF as `(x, F(x))` at each distinct sample.
pub fn empirical_cdf(samples: &[f64]) -> Result<Vec<(f64, f64)>, BenchError> {
    if samples.is_empty() {
        return Err(BenchError::Analysis("empty sample".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(BenchError::Analysis("non-finite sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, x) in sorted.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *x => last.1 = f,
            _ => out.push((*x, f)),
        }
    }
    Ok(out)
}

/// CDF of per-UE evaluation rates, optionally restricted to one slice.
pub fn throughput_cdf(record: &RunRecord, slice: Option<SliceId>) -> Result<Vec<(f64, f64)>, BenchError> {
    let rates = slice_rates(std::slice::from_ref(record), slice);
    empirical_cdf(&rates)
}

pub(crate) fn slice_rates(records: &[RunRecord], slice: Option<SliceId>) -> Vec<f64> {
    records
        .iter()
        .flat_map(|r| &r.ue_rates)
        .filter(|u| slice.is_none_or(|s| u.slice == s))
        .map(|u| u.rate_bps)
        .collect()
}

/// Linear-interpolation quantile of sorted data (Hyndman-Fan type 7).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoxStats {
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Most extreme samples within 1.5 IQR of the quartiles.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

pub fn box_stats(values: &[f64]) -> Result<BoxStats, BenchError> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(BenchError::Analysis("box statistics need finite samples".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = sorted.iter().copied().filter(|v| *v >= lo_fence && *v <= hi_fence);
    let whisker_low = inside.clone().fold(f64::INFINITY, f64::min);
    let whisker_high = inside.fold(f64::NEG_INFINITY, f64::max);
    Ok(BoxStats {
        n: sorted.len(),
        median: quantile(&sorted, 0.5),
        q1,
        q3,
        whisker_low,
        whisker_high,
        outliers: sorted.iter().copied().filter(|v| *v < lo_fence || *v > hi_fence).collect(),
    })
}

/// Box statistics of accumulated training reward per variant.
pub fn reward_distribution_stats(records: &[RunRecord]) -> Result<Vec<(VariantId, BoxStats)>, BenchError> {
    let mut by_variant: BTreeMap<VariantId, Vec<f64>> = BTreeMap::new();
    for r in records {
        by_variant.entry(r.variant).or_default().push(r.accumulated_reward);
    }
    if by_variant.is_empty() {
        return Err(BenchError::Analysis("no run records".into()));
    }
    by_variant
        .into_iter()
        .map(|(v, values)| {
            if values.len() < MIN_SEEDS {
                return Err(BenchError::Analysis(format!(
                    "{} has {} seeds, at least {} are needed",
                    v,
                    values.len(),
                    MIN_SEEDS
                )));
            }
            Ok((v, box_stats(&values)?))
        })
        .collect()
}

/// Trailing moving average; the first `window - 1` entries average what is available.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, v) in series.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= series[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Largest full-window moving average, or the plain mean of a shorter series.
pub fn max_moving_average(series: &[f64], window: usize) -> Option<f64> {
    if series.is_empty() {
        return None;
    }
    let window = window.clamp(1, series.len());
    moving_average(series, window)[window - 1..]
        .iter()
        .copied()
        .max_by(f64::total_cmp)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub n_learnable: usize,
    /// `(seed, max moving-average reward)`.
    pub per_seed: Vec<(u64, f64)>,
    pub mean: f64,
    pub std: f64,
    pub is_argmax: bool,
}

/// One row per learnable-prompt count; the row with the highest mean is flagged.
pub fn sweep_table(records: &[RunRecord], window: usize) -> Vec<SweepRow> {
    let mut by_count: BTreeMap<usize, Vec<(u64, f64)>> = BTreeMap::new();
    for r in records {
        if let Some(m) = max_moving_average(&r.rewards, window) {
            by_count.entry(r.n_learnable).or_default().push((r.seed, m));
        }
    }
    let mut rows: Vec<SweepRow> = by_count
        .into_iter()
        .map(|(n_learnable, mut per_seed)| {
            per_seed.sort_by_key(|p| p.0);
            let n = per_seed.len() as f64;
            let mean = per_seed.iter().map(|p| p.1).sum::<f64>() / n;
            let var = if per_seed.len() > 1 {
                per_seed.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            SweepRow {
                n_learnable,
                per_seed,
                mean,
                std: var.sqrt(),
                is_argmax: false,
            }
        })
        .collect();
    let best = rows
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, f64)>, (i, r)| match acc {
            Some((_, m)) if m >= r.mean => acc,
            _ => Some((i, r.mean)),
        });
    if let Some((i, _)) = best {
        rows[i].is_argmax = true;
    }
    rows
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: VariantId,
    pub n_seeds: usize,
    /// Mean evaluation satisfaction per slice, in percent.
    pub satisfaction_pct: [Option<f64>; 3],
    /// Mean per-seed RPI against the baseline run of the same seed.
    pub rpi: Option<f64>,
}

/// Per-variant table rows; `horizon: None` leaves RPI empty.
pub fn ablation_rows(records: &[RunRecord], horizon: Option<usize>) -> Result<Vec<AblationRow>, BenchError> {
    let baselines: BTreeMap<u64, &RunRecord> = records
        .iter()
        .filter(|r| r.variant == VariantId::BASELINE)
        .map(|r| (r.seed, r))
        .collect();
    let mut rows = Vec::new();
    for variant in VariantId::ALL {
        let runs: Vec<&RunRecord> = records.iter().filter(|r| r.variant == variant).collect();
        if runs.is_empty() {
            continue;
        }
        let mut satisfaction_pct = [None; 3];
        for (l, slot) in satisfaction_pct.iter_mut().enumerate() {
            let vals: Vec<f64> = runs.iter().filter_map(|r| r.eval.satisfaction[l]).collect();
            if !vals.is_empty() {
                *slot = Some(100.0 * vals.iter().sum::<f64>() / vals.len() as f64);
            }
        }
        let mut rpis = Vec::new();
        if let Some(h) = horizon {
            for r in &runs {
                if let Some(b) = baselines.get(&r.seed) {
                    rpis.push(compute_rpi(r, b, h)?);
                }
            }
        }
        rows.push(AblationRow {
            variant,
            n_seeds: runs.len(),
            satisfaction_pct,
            rpi: (!rpis.is_empty()).then(|| rpis.iter().sum::<f64>() / rpis.len() as f64),
        });
    }
    Ok(rows)
}
