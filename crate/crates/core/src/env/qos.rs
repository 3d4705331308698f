use super::{DuState, EnvError, SliceId, NUM_SLICES};

/// Queue drain time plus a fixed frame delay: `queue / max(rate, floor) + delay`.
pub fn compute_latency(queue_bits: f64, rate_bps: f64, rate_floor_bps: f64, frame_delay_s: f64) -> f64 {
    queue_bits / rate_bps.max(rate_floor_bps) + frame_delay_s
}

/// Mean user throughput `μ_r`.
pub fn qos_embb(rates: &[f64]) -> Result<f64, EnvError> {
    if rates.is_empty() {
        return Err(EnvError::EmptySlice(SliceId::Embb));
    }
    Ok(rates.iter().sum::<f64>() / rates.len() as f64)
}

/// `d_s = (#{C_i > λ_i} / N_u) · Σ C_i`.
pub fn qos_mmtc(rates: &[f64], thresholds: &[f64]) -> Result<f64, EnvError> {
    if rates.len() != thresholds.len() {
        return Err(EnvError::LengthMismatch {
            rates: rates.len(),
            thresholds: thresholds.len(),
        });
    }
    if rates.is_empty() {
        return Err(EnvError::EmptySlice(SliceId::Mmtc));
    }
    let served = rates.iter().zip(thresholds).filter(|(c, l)| c > l).count();
    Ok(served as f64 / rates.len() as f64 * rates.iter().sum::<f64>())
}

/// Worst-case latency `l_d`.
pub fn qos_urllc(latencies: &[f64]) -> Result<f64, EnvError> {
    if latencies.is_empty() {
        return Err(EnvError::EmptySlice(SliceId::Urllc));
    }
    Ok(latencies.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// `Q = [μ_r, d_s, l_d]` for one DU. Empty slices report 0, 0 and
/// `latency_cap_s`; `l_d` is clamped at `latency_cap_s`.
pub fn qos_vector(du: &DuState, rates: &[f64], latencies: &[f64], latency_cap_s: f64) -> Result<[f64; NUM_SLICES], EnvError> {
    if rates.len() != du.ues.len() || latencies.len() != du.ues.len() {
        return Err(EnvError::DimensionMismatch(format!(
            "{} rates and {} latencies for {} UEs",
            rates.len(),
            latencies.len(),
            du.ues.len()
        )));
    }
    let pick = |slice: SliceId, values: &[f64]| -> Vec<f64> {
        du.ues
            .iter()
            .zip(values)
            .filter(|(ue, _)| ue.slice == slice)
            .map(|(_, v)| *v)
            .collect()
    };
    let embb = pick(SliceId::Embb, rates);
    let mmtc = pick(SliceId::Mmtc, rates);
    let thresholds: Vec<f64> = du
        .ues
        .iter()
        .filter(|ue| ue.slice == SliceId::Mmtc)
        .map(|ue| ue.min_rate_bps)
        .collect();
    let urllc = pick(SliceId::Urllc, latencies);
    Ok([
        if embb.is_empty() { 0.0 } else { qos_embb(&embb)? },
        if mmtc.is_empty() { 0.0 } else { qos_mmtc(&mmtc, &thresholds)? },
        if urllc.is_empty() {
            latency_cap_s
        } else {
            qos_urllc(&urllc)?.min(latency_cap_s)
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ChannelState, Ue};

    #[test]
    fn latency_model() {
        assert!((compute_latency(1e4, 1e6, 1.0, 1e-3) - 0.011).abs() < 1e-15);
        assert_eq!(compute_latency(0.0, 5e5, 1.0, 1e-3), 1e-3);
        assert_eq!(compute_latency(10.0, 0.0, 1.0, 1e-3), 10.0 + 1e-3);
        assert!(compute_latency(1e4, 2e6, 1.0, 0.0) < compute_latency(1e4, 1e6, 1.0, 0.0));
    }

    #[test]
    fn slice_metrics_by_hand() {
        assert_eq!(qos_embb(&[1e6, 2e6, 3e6]).unwrap(), 2e6);
        assert_eq!(qos_embb(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(qos_mmtc(&[2.0, 4.0], &[1.0, 1.0]).unwrap(), 6.0);
        assert_eq!(qos_mmtc(&[2.0, 0.5], &[1.0, 1.0]).unwrap(), 1.25);
        assert_eq!(qos_mmtc(&[0.5, 0.2], &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(qos_urllc(&[1e-3, 5e-3, 2e-3]).unwrap(), 5e-3);
        assert_eq!(qos_urllc(&[2e-3, 5e-3, 1e-3]).unwrap(), 5e-3);
    }

    #[test]
    fn slice_metric_errors() {
        assert_eq!(qos_embb(&[]), Err(EnvError::EmptySlice(SliceId::Embb)));
        assert_eq!(qos_urllc(&[]), Err(EnvError::EmptySlice(SliceId::Urllc)));
        assert!(matches!(qos_mmtc(&[1.0], &[1.0, 2.0]), Err(EnvError::LengthMismatch { .. })));
    }

    fn du_of(slices: &[SliceId]) -> DuState {
        DuState {
            du_id: 0,
            total_rbs: 1,
            per_slice_rbs: [0; NUM_SLICES],
            ues: slices
                .iter()
                .enumerate()
                .map(|(i, s)| Ue::new(i, *s, [0.0, 0.0], 1.0))
                .collect(),
            channel: ChannelState::flat(slices.len(), 1, 1.0, 0.0, 1.0, 1.0, 1.0),
        }
    }

    #[test]
    fn vector_matches_separate_recomputation() {
        use SliceId::*;
        let du = du_of(&[Embb, Mmtc, Urllc, Embb, Mmtc]);
        let rates = [1e6, 2.0, 7.0, 3e6, 0.5];
        let lat = [9.0, 9.0, 4e-3, 9.0, 9.0];
        let q = qos_vector(&du, &rates, &lat, 0.05).unwrap();
        assert_eq!(q[0], qos_embb(&[1e6, 3e6]).unwrap());
        assert_eq!(q[1], qos_mmtc(&[2.0, 0.5], &[1.0, 1.0]).unwrap());
        assert_eq!(q[2], 4e-3);
    }

    #[test]
    fn empty_slice_convention() {
        let du = du_of(&[SliceId::Embb]);
        assert_eq!(qos_vector(&du, &[2e6], &[0.0], 0.05).unwrap(), [2e6, 0.0, 0.05]);
    }
}
