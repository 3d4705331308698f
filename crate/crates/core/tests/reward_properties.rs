use oranguide_core::reward::{slice_base_reward, total_reward, underperformance_penalty, RewardParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn base_reward_is_continuous_at_threshold() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let thr = 10f64.powf(rng.random_range(-3.0..8.0));
        let beta_r = rng.random_range(0.01..5.0);
        let gamma_r = rng.random_range(0.01..5.0);
        let upper = 1.0 + beta_r * (thr - thr) / thr;
        let lower = (-gamma_r * (thr - thr) / thr).exp();
        assert!((upper - lower).abs() < 1e-12);
        assert!((slice_base_reward(thr, thr, beta_r, gamma_r) - 1.0).abs() < 1e-12);
        let below = slice_base_reward(thr * (1.0 - 1e-12), thr, beta_r, gamma_r);
        assert!((below - 1.0).abs() < 1e-10);
    }
}

#[test]
fn total_reward_is_monotone_on_a_grid() {
    let p = RewardParams::default();
    let mut points = 0;
    for l in 0..3 {
        for a in 0..12 {
            for b in 0..12 {
                let mut q = [0.0; 3];
                let others: Vec<usize> = (0..3).filter(|x| *x != l).collect();
                q[others[0]] = p.thr[others[0]] * a as f64 / 6.0;
                q[others[1]] = p.thr[others[1]] * b as f64 / 6.0;
                let mut prev = f64::NEG_INFINITY;
                for s in 0..=40 {
                    q[l] = p.thr[l] * s as f64 / 20.0;
                    let r = total_reward(&q, &p).r_t;
                    assert!(r >= prev - 1e-12, "slice {} q {:?}", l, q);
                    prev = r;
                    points += 1;
                }
            }
        }
    }
    assert!(points >= 1000);
}

proptest! {
    #[test]
    fn base_reward_depends_only_on_the_ratio(q in 0.0f64..1e7, thr in 1.0f64..1e7, beta in 0.1f64..3.0, gamma in 0.1f64..3.0) {
        let f = slice_base_reward(q, thr, beta, gamma);
        for c in [0.5, 2.0, 10.0] {
            let g = slice_base_reward(c * q, c * thr, beta, gamma);
            prop_assert!((f - g).abs() <= 1e-12 * f.abs().max(1.0));
        }
    }

    #[test]
    fn reward_ranges(q in proptest::array::uniform3(0.0f64..2e7)) {
        let p = RewardParams::default();
        let r = total_reward(&q, &p);
        prop_assert!(r.r_q > 0.0 && r.r_q < 3.0);
        prop_assert!(r.r_ng >= 0.0);
        for l in 0..3 {
            let mut single = [f64::INFINITY; 3];
            single[l] = q[l];
            let term = underperformance_penalty(&single, &p);
            prop_assert!(term == 0.0 || term > 1.0);
        }
    }
}
