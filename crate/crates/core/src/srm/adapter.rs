use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SrmError;
use crate::numerics::{Adam, AdamConfig, Binding, Graph, Mlp, Param, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdapterConfig {
    pub d_align: usize,
    /// Hidden widths of both adapters; empty means a single affine map.
    pub hidden: Vec<usize>,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self {
            d_align: 32,
            hidden: vec![64],
        }
    }
}

fn widths(input: usize, cfg: &AdapterConfig) -> Vec<usize> {
    let mut w = vec![input];
    w.extend_from_slice(&cfg.hidden);
    w.push(cfg.d_align);
    w
}

/// `F_c1`: raw state → shared latent; `F_c2`: encoder output → shared latent.
#[derive(Debug)]
pub struct AdapterPair {
    pub f_c1: Mlp,
    pub f_c2: Mlp,
}

impl AdapterPair {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, d_model: usize, cfg: &AdapterConfig, rng: &mut R) -> Self {
        Self {
            f_c1: Mlp::new("adapter.f_c1", &widths(state_dim, cfg), rng),
            f_c2: Mlp::new("adapter.f_c2", &widths(d_model, cfg), rng),
        }
    }

    pub fn zeros(state_dim: usize, d_model: usize, cfg: &AdapterConfig) -> Self {
        Self {
            f_c1: Mlp::zeros("adapter.f_c1", &widths(state_dim, cfg)),
            f_c2: Mlp::zeros("adapter.f_c2", &widths(d_model, cfg)),
        }
    }

    pub fn d_align(&self) -> usize {
        self.f_c1.output_dim()
    }

    pub fn params(&self) -> impl Iterator<Item = &Param> {
        self.f_c1.params().chain(self.f_c2.params())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.f_c1.params_mut();
        out.extend(self.f_c2.params_mut());
        out
    }

    /// Returns `(s'_t, s'_r,t) = (F_c1(s_t), F_c2(h_t))` on the tape.
    pub fn adapt(&self, g: &mut Graph, s: Var, h: Var, binding: Binding) -> Result<(Var, Var), SrmError> {
        let s_prime = self.f_c1.forward(g, s, binding)?;
        let s_r = self.f_c2.forward(g, h, binding)?;
        Ok((s_prime, s_r))
    }

    pub fn adapt_eval(&self, s: &[f64], h: &[f64]) -> Result<(Vec<f64>, Vec<f64>), SrmError> {
        let s_prime = self.f_c1.eval(&Tensor::row(s))?.into_data();
        let s_r = self.f_c2.eval(&Tensor::row(h))?.into_data();
        Ok((s_prime, s_r))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentReport {
    pub initial_loss: f64,
    /// Full-set loss after each epoch.
    pub epoch_losses: Vec<f64>,
}

impl AlignmentReport {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(self.initial_loss)
    }
}

fn stack(rows: &[&[f64]]) -> Result<Tensor, SrmError> {
    let cols = rows.first().map_or(0, |r| r.len());
    let mut data = Vec::with_capacity(rows.len() * cols);
    for r in rows {
        data.extend_from_slice(r);
    }
    Ok(Tensor::new(vec![rows.len(), cols], data)?)
}

fn alignment_loss(ap: &AdapterPair, anchor: &Tensor, h: &Tensor) -> Result<f64, SrmError> {
    let pred = ap.f_c2.eval(h)?;
    let n = anchor.rows().max(1) as f64;
    Ok(pred.data().iter().zip(anchor.data()).map(|(p, a)| (p - a) * (p - a)).sum::<f64>() / n)
}

/// Fits `F_c2` so that `F_c2(h_t) ≈ F_c1(s_t)` over the paired set, with
/// `F_c1` held fixed as the anchor of the shared latent space. Minimises the
/// per-pair squared distance with Adam over sequential minibatches.
pub fn train_adapters_offline(
    ap: &mut AdapterPair,
    pairs: &[(Vec<f64>, Vec<f64>)],
    epochs: usize,
    lr: f64,
    batch: usize,
) -> Result<AlignmentReport, SrmError> {
    if pairs.is_empty() {
        return Err(SrmError::EmptyPairs);
    }
    let s_all = stack(&pairs.iter().map(|(s, _)| s.as_slice()).collect::<Vec<_>>())?;
    let h_all = stack(&pairs.iter().map(|(_, h)| h.as_slice()).collect::<Vec<_>>())?;
    let anchor = ap.f_c1.eval(&s_all)?;
    let initial_loss = alignment_loss(ap, &anchor, &h_all)?;
    let mut opt = Adam::new(AdamConfig {
        lr,
        ..AdamConfig::default()
    });
    let batch = batch.max(1);
    let d = anchor.cols();
    let dh = h_all.cols();
    let mut epoch_losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        for start in (0..pairs.len()).step_by(batch) {
            let end = (start + batch).min(pairs.len());
            let rows = end - start;
            let h = Tensor::new(vec![rows, dh], h_all.data()[start * dh..end * dh].to_vec())?;
            let target = Tensor::new(vec![rows, d], anchor.data()[start * d..end * d].to_vec())?;
            let mut g = Graph::new();
            let hv = g.constant(h);
            let tv = g.constant(target);
            let pred = ap.f_c2.forward(&mut g, hv, Binding::Trainable)?;
            let diff = g.sub(pred, tv)?;
            let sq = g.square(diff);
            let total = g.sum(sq);
            let loss = g.scale(total, 1.0 / rows as f64);
            g.backward(loss)?;
            let mut params = ap.f_c2.params_mut();
            g.accumulate_into(params.iter_mut().map(|p| &mut **p));
            opt.step(&mut params)?;
        }
        epoch_losses.push(alignment_loss(ap, &anchor, &h_all)?);
    }
    Ok(AlignmentReport {
        initial_loss,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_adapters_give_zero_vectors() {
        let ap = AdapterPair::zeros(5, 4, &AdapterConfig::default());
        let (a, b) = ap.adapt_eval(&[1.0; 5], &[2.0; 4]).unwrap();
        assert_eq!(a.len(), b.len());
        assert!(a.iter().chain(&b).all(|v| *v == 0.0));
    }

    #[test]
    fn gradients_reach_both_adapters() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ap = AdapterPair::new(5, 4, &AdapterConfig::default(), &mut rng);
        let mut g = Graph::new();
        let s = g.constant(Tensor::row(&[0.3, -0.1, 0.8, 0.5, 1.0]));
        let h = g.constant(Tensor::row(&[0.2, 0.4, -0.6, 0.9]));
        let (a, b) = ap.adapt(&mut g, s, h, Binding::Trainable).unwrap();
        let joined = g.concat_cols(&[a, b]).unwrap();
        let sq = g.square(joined);
        let loss = g.sum(sq);
        g.backward(loss).unwrap();
        for p in ap.params() {
            assert!(g.param_grad(p).is_some(), "{}", p.name());
        }
    }

    #[test]
    fn recovers_a_shared_linear_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = AdapterConfig {
            d_align: 3,
            hidden: vec![],
        };
        let mut ap = AdapterPair::new(4, 4, &cfg, &mut rng);
        let a: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..64)
            .map(|_| {
                let h: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                let s = (0..4).map(|i| (0..4).map(|j| a[i * 4 + j] * h[j]).sum()).collect();
                (s, h)
            })
            .collect();
        let report = train_adapters_offline(&mut ap, &pairs, 400, 1e-2, 16).unwrap();
        assert!(report.final_loss() < 1e-3, "{}", report.final_loss());
        assert!(report.final_loss() <= report.initial_loss);
    }

    #[test]
    fn single_pair_is_fitted() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut ap = AdapterPair::new(3, 2, &AdapterConfig::default(), &mut rng);
        let pairs = vec![(vec![0.5, -1.0, 2.0], vec![0.1, 0.7])];
        let report = train_adapters_offline(&mut ap, &pairs, 500, 1e-2, 1).unwrap();
        assert!(report.final_loss() < 1e-6);
    }

    #[test]
    fn empty_pair_set_is_an_error() {
        let mut ap = AdapterPair::zeros(2, 2, &AdapterConfig::default());
        assert!(matches!(
            train_adapters_offline(&mut ap, &[], 1, 1e-3, 4),
            Err(SrmError::EmptyPairs)
        ));
    }
}
