use serde::{Deserialize, Serialize};

use super::{NumericsError, Param, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam.
///
/// Moment buffers are positional: every call to [`Adam::step`] must pass the
/// same parameters in the same order.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.first, &self.second)
    }

    pub fn restore(&mut self, step: u64, first: Vec<Tensor>, second: Vec<Tensor>) {
        self.step = step;
        self.first = first;
        self.second = second;
    }

    /// Applies one update using each parameter's accumulated gradient, then
    /// clears the gradients.
    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<(), NumericsError> {
        if let Some(p) = params.iter().find(|p| p.grad().is_none()) {
            return Err(NumericsError::MissingGradient(p.name().to_string()));
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
            self.second = self.first.clone();
        } else if self.first.len() != params.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "adam.step",
                expected: format!("{} parameters", self.first.len()),
                found: format!("{} parameters", params.len()),
            });
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powf(self.step as f64);
        let bc2 = 1.0 - beta2.powf(self.step as f64);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let g = p.take_grad().expect("checked above");
            if m.shape() != g.shape() {
                return Err(NumericsError::ShapeMismatch {
                    op: "adam.step",
                    expected: format!("{:?}", m.shape()),
                    found: format!("{:?}", g.shape()),
                });
            }
            let values = p.value.data_mut();
            for i in 0..values.len() {
                let gi = g.data()[i];
                let mi = beta1 * m.data()[i] + (1.0 - beta1) * gi;
                let vi = beta2 * v.data()[i] + (1.0 - beta2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                values[i] -= lr * (mi / bc1) / ((vi / bc2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = Param::new("p", Tensor::row(&[1.0, -2.0]));
        let mut opt = Adam::new(AdamConfig::default());
        for _ in 0..10 {
            p.accumulate_grad(&Tensor::zeros(&[1, 2]));
            opt.step(&mut [&mut p]).unwrap();
        }
        assert_eq!(p.value.data(), &[1.0, -2.0]);
        assert!(p.grad().is_none());
    }

    #[test]
    fn first_step_has_learning_rate_magnitude() {
        let cfg = AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        };
        let mut p = Param::new("p", Tensor::scalar(0.0));
        let mut opt = Adam::new(cfg);
        p.accumulate_grad(&Tensor::scalar(1.0));
        opt.step(&mut [&mut p]).unwrap();
        // m̂ = v̂ = 1, so the step is lr / (1 + eps).
        let expected = -cfg.lr / (1.0 + cfg.eps);
        assert!((p.value.item() - expected).abs() < 1e-15);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let target = [3.0, -1.5];
        let mut p = Param::new("x", Tensor::row(&[0.0, 0.0]));
        let mut opt = Adam::new(AdamConfig {
            lr: 0.05,
            ..AdamConfig::default()
        });
        for _ in 0..2000 {
            let g: Vec<f64> = p
                .value
                .data()
                .iter()
                .zip(target)
                .map(|(x, t)| 2.0 * (x - t))
                .collect();
            p.accumulate_grad(&Tensor::row(&g));
            opt.step(&mut [&mut p]).unwrap();
        }
        for (x, t) in p.value.data().iter().zip(target) {
            assert!((x - t).abs() < 1e-3, "{} vs {}", x, t);
        }
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut p = Param::new("lonely", Tensor::scalar(1.0));
        let mut opt = Adam::new(AdamConfig::default());
        let err = opt.step(&mut [&mut p]).unwrap_err();
        assert!(matches!(err, NumericsError::MissingGradient(name) if name == "lonely"));
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut p = Param::new("p", Tensor::row(&[0.3, 0.4]));
        let mut opt = Adam::new(AdamConfig {
            lr: 0.0,
            ..AdamConfig::default()
        });
        p.accumulate_grad(&Tensor::row(&[5.0, -5.0]));
        opt.step(&mut [&mut p]).unwrap();
        assert_eq!(p.value.data(), &[0.3, 0.4]);
    }
}
