use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use super::{dbm_to_watts, ChannelState, DuState, EnvConfig, EnvError, InterferenceModel, NUM_SLICES};
use crate::codec::BinaryMatrix;

/// Linear gain of the `128.1 + 37.6·log10(d_km)` dB macro path-loss model.
pub fn pathloss_gain(distance_m: f64) -> f64 {
    let db = 128.1 + 37.6 * (distance_m / 1000.0).log10();
    10f64.powf(-db / 10.0)
}

/// Draws one Rayleigh-faded channel realisation for every (UE, RB) of `du`.
pub fn sample_channel<R: Rng + ?Sized>(du: &DuState, cfg: &EnvConfig, rng: &mut R) -> ChannelState {
    let n = du.ues.len();
    let k = du.total_rbs;
    let mut gain = Vec::with_capacity(n * k);
    let mut interference = Vec::with_capacity(n * k);
    for ue in &du.ues {
        let pl = pathloss_gain(ue.distance().max(cfg.min_distance_m));
        for _ in 0..k {
            let fading: f64 = rng.sample(Exp1);
            gain.push(pl * fading);
            interference.push(match cfg.interference {
                InterferenceModel::None => 0.0,
                InterferenceModel::Constant { power_dbm } => dbm_to_watts(power_dbm),
                InterferenceModel::LogNormal { mean_dbm, sigma_db } => {
                    let z: f64 = rng.sample(StandardNormal);
                    dbm_to_watts(mean_dbm + sigma_db * z)
                }
            });
        }
    }
    ChannelState {
        n_ues: n,
        rbs: k,
        gain,
        interference,
        noise_variance: cfg.noise_variance_w(),
        rb_bandwidth: cfg.rb_bandwidth_hz,
        tx_power: vec![cfg.tx_power_w(); k],
    }
}

/// Shannon rate of UE `u` in bits/s: `B·Σ_k e_{u,k}·b_{l,k}·log2(1 + SINR_{u,k})`.
pub fn compute_rate(du: &DuState, u: usize, e: &BinaryMatrix, b: &BinaryMatrix) -> Result<f64, EnvError> {
    let k = du.total_rbs;
    if u >= du.ues.len() || e.rows() <= u || e.cols() != k || b.rows() != NUM_SLICES || b.cols() != k {
        return Err(EnvError::DimensionMismatch(format!(
            "UE {} of {} with e {}x{} and b {}x{} on {} RBs",
            u,
            du.ues.len(),
            e.rows(),
            e.cols(),
            b.rows(),
            b.cols(),
            k
        )));
    }
    let ch = &du.channel;
    if ch.n_ues != du.ues.len() || ch.rbs != k {
        return Err(EnvError::DimensionMismatch(format!(
            "channel is {}x{}, DU has {} UEs and {} RBs",
            ch.n_ues,
            ch.rbs,
            du.ues.len(),
            k
        )));
    }
    let l = du.ues[u].slice.index();
    let bits: f64 = (0..k)
        .filter(|&rb| e.get(u, rb) && b.get(l, rb))
        .map(|rb| (1.0 + ch.sinr(u, rb)).log2())
        .sum();
    Ok(ch.rb_bandwidth * bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{SliceId, Ue};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn du(gains: &[f64]) -> DuState {
        let k = gains.len();
        let mut ch = ChannelState::flat(1, k, 1.0, 0.0, 1.0, 200e3, 1.0);
        ch.gain = gains.to_vec();
        DuState {
            du_id: 0,
            total_rbs: k,
            per_slice_rbs: [k, 0, 0],
            ues: vec![Ue::new(0, SliceId::Embb, [50.0, 0.0], 1e6)],
            channel: ch,
        }
    }

    fn grant(k: usize, rbs: &[usize]) -> (BinaryMatrix, BinaryMatrix) {
        let mut e = BinaryMatrix::zeros(1, k);
        let mut b = BinaryMatrix::zeros(3, k);
        for &rb in rbs {
            e.set(0, rb, true);
            b.set(0, rb, true);
        }
        (e, b)
    }

    #[test]
    fn hand_evaluated_rates() {
        let d = du(&[1.0]);
        let (e, b) = grant(1, &[0]);
        assert_eq!(compute_rate(&d, 0, &e, &b).unwrap(), 200_000.0);
        let (e0, b0) = grant(1, &[]);
        assert_eq!(compute_rate(&d, 0, &e0, &b0).unwrap(), 0.0);

        let d = du(&[3.0, 15.0]);
        let (e, b) = grant(2, &[0, 1]);
        assert!((compute_rate(&d, 0, &e, &b).unwrap() - 1_200_000.0).abs() < 1e-9);
    }

    #[test]
    fn adding_an_rb_never_lowers_rate() {
        let d = du(&[0.2, 4.0, 0.0, 9.0]);
        let mut prev = 0.0;
        for n in 1..=4 {
            let rbs: Vec<usize> = (0..n).collect();
            let (e, b) = grant(4, &rbs);
            let r = compute_rate(&d, 0, &e, &b).unwrap();
            assert!(r >= prev);
            prev = r;
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let d = du(&[1.0, 1.0]);
        let (e, b) = grant(3, &[0]);
        assert!(matches!(compute_rate(&d, 0, &e, &b), Err(EnvError::DimensionMismatch(_))));
    }

    #[test]
    fn pathloss_reference_points() {
        assert!((pathloss_gain(1000.0) - 10f64.powf(-12.81)).abs() < 1e-24);
        assert!(pathloss_gain(100.0) > pathloss_gain(200.0));
    }

    #[test]
    fn fading_mean_tracks_pathloss() {
        let cfg = EnvConfig {
            interference: InterferenceModel::None,
            ..EnvConfig::default()
        };
        let d = DuState {
            total_rbs: 100_000,
            ..du(&[1.0])
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ch = sample_channel(&d, &cfg, &mut rng);
        let pl = pathloss_gain(50.0);
        let mean = ch.gain.iter().sum::<f64>() / ch.gain.len() as f64;
        assert!((mean / pl - 1.0).abs() < 0.02);
        assert!(ch.interference.iter().all(|i| *i == 0.0));
        let again = sample_channel(&d, &cfg, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(ch, again);
    }
}
