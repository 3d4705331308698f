use oranguide_core::numerics::{gaussian_sample_reparam, kl_divergence, softmax, squashed_log_prob, Graph, Mlp, Tensor};
use oranguide_core::srm::{distill_loss, distill_value};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

const SCALE: f64 = 3.0;
const MEAN: f64 = 0.4;
const LOG_STD: f64 = -0.3;

fn log_prob_at(a: f64) -> f64 {
    squashed_log_prob(&[(a / SCALE).atanh()], &[MEAN], &[LOG_STD], SCALE)
}

#[test]
fn squashed_log_prob_matches_interval_probabilities() {
    let normal = Normal::new(MEAN, LOG_STD.exp()).unwrap();
    let h = 1e-4;
    for i in -20..=20 {
        let a = i as f64 * 0.14;
        let lo = ((a - h) / SCALE).atanh();
        let hi = ((a + h) / SCALE).atanh();
        let density = (normal.cdf(hi) - normal.cdf(lo)) / (2.0 * h);
        let ours = log_prob_at(a).exp();
        assert!((ours - density).abs() / density < 1e-3, "a={} {} vs {}", a, ours, density);
    }
}

#[test]
fn squashed_density_integrates_to_one() {
    let n = 200_000;
    let step = 2.0 * SCALE / n as f64;
    let mut total = 0.0;
    for i in 1..n {
        let a = -SCALE + i as f64 * step;
        total += log_prob_at(a).exp() * step;
    }
    assert!((total - 1.0).abs() < 1e-3, "{}", total);
}

#[test]
fn sampled_log_prob_agrees_with_a_histogram() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 200_000;
    let width = 0.1;
    let mut counts = vec![0usize; (2.0 * SCALE / width) as usize];
    for _ in 0..n {
        let (a, lp) = gaussian_sample_reparam(&[MEAN], &[LOG_STD], SCALE, &mut rng);
        assert!((lp - log_prob_at(a[0])).abs() < 1e-6 * lp.abs().max(1.0));
        let bin = (((a[0] + SCALE) / width) as usize).min(counts.len() - 1);
        counts[bin] += 1;
    }
    let mut checked = 0;
    for (bin, c) in counts.iter().enumerate() {
        let centre = -SCALE + (bin as f64 + 0.5) * width;
        let expected = log_prob_at(centre).exp();
        if expected * width * n as f64 > 4000.0 {
            let empirical = *c as f64 / (n as f64 * width);
            assert!((empirical - expected).abs() / expected < 0.05, "bin {}: {} vs {}", bin, empirical, expected);
            checked += 1;
        }
    }
    assert!(checked >= 5);
}

#[test]
fn lower_clamped_log_std_is_near_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws: Vec<f64> = (0..100)
        .map(|_| gaussian_sample_reparam(&[0.2], &[-20.0], SCALE, &mut rng).0[0])
        .collect();
    let mean = draws.iter().sum::<f64>() / 100.0;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / 99.0;
    assert!(var < 1e-8);
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
    softmax(&logits)
}

#[test]
fn kl_is_nonnegative_and_zero_at_equality() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..1000 {
        let n = rng.random_range(2..10);
        let p = random_simplex(&mut rng, n);
        let q = random_simplex(&mut rng, n);
        assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
        assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-15);
        let hp: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let hq: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        assert!(distill_value(&hp, &hq, 2.0).unwrap() >= 0.0);
        assert!(distill_value(&hp, &hp, 2.0).unwrap().abs() < 1e-15);
    }
}

#[test]
fn distillation_of_near_one_hot_logits_matches_direct_sum() {
    let hg = [8.0, 0.0, 0.0, 0.0];
    let hd = [0.0, 8.0, 0.0, 0.0];
    let z = |h: &[f64]| h.iter().map(|v| v.exp()).sum::<f64>();
    let (zg, zd) = (z(&hg), z(&hd));
    let direct: f64 = (0..4)
        .map(|i| {
            let p = hg[i].exp() / zg;
            let q = hd[i].exp() / zd;
            p * (p / q).ln()
        })
        .sum();
    assert!((distill_value(&hg, &hd, 1.0).unwrap() - direct).abs() < 1e-10);
}

#[test]
fn distillation_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let h: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let teacher: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut g = Graph::new();
        let v = g.input(Tensor::row(&h));
        let l = distill_loss(&mut g, v, &teacher, 2.0).unwrap();
        g.backward(l).unwrap();
        let grad = g.grad(v).unwrap().clone();
        for i in 0..6 {
            let mut up = h.clone();
            up[i] += 1e-5;
            let mut down = h.clone();
            down[i] -= 1e-5;
            let fd = (distill_value(&up, &teacher, 2.0).unwrap() - distill_value(&down, &teacher, 2.0).unwrap()) / 2e-5;
            let an = grad.data()[i];
            assert!((an - fd).abs() / an.abs().max(fd.abs()).max(1e-6) < 1e-4);
        }
    }
}

#[test]
fn target_network_distance_shrinks_under_soft_updates() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let source = Mlp::new("q", &[4, 8, 1], &mut rng);
    let mut target = Mlp::new("q_target", &[4, 8, 1], &mut rng);
    let dist = |t: &Mlp| -> f64 {
        t.params()
            .zip(source.params())
            .map(|(a, b)| a.value.data().iter().zip(b.value.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    };
    let mut prev = dist(&target);
    for _ in 0..50 {
        target.soft_update_from(&source, 0.005);
        let d = dist(&target);
        assert!(d < prev);
        prev = d;
    }
}
