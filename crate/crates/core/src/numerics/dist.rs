//! Probability helpers: softmax, KL divergence and the tanh-squashed Gaussian
//! policy distribution (with and without a tape).

use rand::Rng;
use rand_distr::StandardNormal;

use super::graph::softmax_in_place;
use super::{Graph, NumericsError, Tensor, Var};

const LN_2: f64 = std::f64::consts::LN_2;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    if !out.is_empty() {
        softmax_in_place(&mut out);
    }
    out
}

fn check_distribution(name: &'static str, p: &[f64]) -> Result<(), NumericsError> {
    if p.is_empty() || p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(NumericsError::NotADistribution(name));
    }
    if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(NumericsError::NotADistribution(name));
    }
    Ok(())
}

/// `KL(p ‖ q) = Σ p·ln(p/q)`, with `0·ln 0 = 0`. `q` must be strictly positive.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, NumericsError> {
    check_distribution("p", p)?;
    check_distribution("q", q)?;
    if p.len() != q.len() {
        return Err(NumericsError::ShapeMismatch {
            op: "kl_divergence",
            expected: format!("{} entries", p.len()),
            found: format!("{} entries", q.len()),
        });
    }
    if q.iter().any(|v| *v <= 0.0) {
        return Err(NumericsError::NotADistribution("q"));
    }
    Ok(p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum())
}

/// `ln(1 - tanh(u)^2)`, evaluated stably for large `|u|`.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (LN_2 - u - super::graph::softplus(-2.0 * u))
}

/// Log-density of `a = scale·tanh(u)` where `u ~ N(mean, exp(log_std)²)`,
/// given the pre-squash value `u`.
pub fn squashed_log_prob(u: &[f64], mean: &[f64], log_std: &[f64], scale: f64) -> f64 {
    u.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((&u, &m), &ls)| {
            let z = (u - m) / ls.exp();
            -0.5 * z * z - ls - HALF_LN_2PI - scale.ln() - log_one_minus_tanh_sq(u)
        })
        .sum()
}

/// Reparameterised draw from the squashed Gaussian. Returns the squashed
/// sample and its log-probability.
pub fn gaussian_sample_reparam<R: Rng + ?Sized>(
    mean: &[f64],
    log_std: &[f64],
    scale: f64,
    rng: &mut R,
) -> (Vec<f64>, f64) {
    let u: Vec<f64> = mean
        .iter()
        .zip(log_std)
        .map(|(&m, &ls)| {
            let eps: f64 = rng.sample(StandardNormal);
            m + ls.exp() * eps
        })
        .collect();
    let logp = squashed_log_prob(&u, mean, log_std, scale);
    (u.iter().map(|v| scale * v.tanh()).collect(), logp)
}

/// Tape version of the reparameterised squashed Gaussian for a batch.
///
/// `mean`, `log_std` and `eps` are `[batch, dim]`; returns the squashed
/// action `[batch, dim]` and its log-probability `[batch, 1]`.
pub fn squashed_gaussian(
    g: &mut Graph,
    mean: Var,
    log_std: Var,
    eps: &Tensor,
    scale: f64,
) -> Result<(Var, Var), NumericsError> {
    let std = g.exp(log_std);
    let eps_v = g.constant(eps.clone());
    let noise = g.mul(std, eps_v)?;
    let u = g.add(mean, noise)?;
    let t = g.tanh(u);
    let action = g.scale(t, scale);

    // ln(1 - tanh²u) = 2(ln2 - u - softplus(-2u))
    let m2u = g.scale(u, -2.0);
    let sp = g.softplus(m2u);
    let inner = g.add(u, sp)?;
    let neg_inner = g.neg(inner);
    let shifted = g.add_scalar(neg_inner, LN_2);
    let log_jac = g.scale(shifted, 2.0);

    let base = g.constant(eps.map(|e| -0.5 * e * e - HALF_LN_2PI - scale.ln()));
    let t1 = g.sub(base, log_std)?;
    let per_dim = g.sub(t1, log_jac)?;
    let logp = g.sum_cols(per_dim);
    Ok((action, logp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_of_uniform_logits_is_uniform() {
        let p = softmax(&[2.5; 4]);
        for v in p {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn kl_of_identical_distributions_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let logits: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
            let p = softmax(&logits);
            assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn kl_rejects_non_distributions() {
        assert!(kl_divergence(&[0.5, 0.6], &[0.5, 0.5]).is_err());
        assert!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).is_err());
        assert!(kl_divergence(&[-0.1, 1.1], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn tape_and_plain_log_prob_agree() {
        let mean = Tensor::new(vec![2, 3], vec![0.1, -0.4, 1.2, 0.0, 0.3, -2.0]).unwrap();
        let log_std = Tensor::new(vec![2, 3], vec![-0.5, 0.2, -1.0, 0.0, -2.0, 0.4]).unwrap();
        let eps = Tensor::new(vec![2, 3], vec![0.3, -1.1, 0.5, 2.0, 0.0, -0.7]).unwrap();
        let mut g = Graph::new();
        let (m, ls) = (g.constant(mean.clone()), g.constant(log_std.clone()));
        let (a, lp) = squashed_gaussian(&mut g, m, ls, &eps, 2.0).unwrap();
        for r in 0..2 {
            let u: Vec<f64> = (0..3)
                .map(|c| mean.get(r, c) + log_std.get(r, c).exp() * eps.get(r, c))
                .collect();
            let expected = squashed_log_prob(&u, mean.row_slice(r), log_std.row_slice(r), 2.0);
            assert!((g.value(lp).get(r, 0) - expected).abs() < 1e-12);
            for c in 0..3 {
                assert!((g.value(a).get(r, c) - 2.0 * u[c].tanh()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn stable_jacobian_matches_naive_form() {
        for u in [-3.0, -0.5, 0.0, 0.25, 2.0] {
            let naive = (1.0 - f64::tanh(u).powi(2)).ln();
            assert!((log_one_minus_tanh_sq(u) - naive).abs() < 1e-12);
        }
        assert!(log_one_minus_tanh_sq(40.0).is_finite());
    }
}
