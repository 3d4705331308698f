use rand::Rng;

use super::{Graph, NumericsError, Param, Tensor, Var};

/// How a network's parameters enter a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binding {
    Trainable,
    Frozen,
}

#[derive(Debug)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
    pub fn new<R: Rng + ?Sized>(name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let w: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let b: Vec<f64> = (0..fan_out).map(|_| rng.random_range(-bound..bound)).collect();
        Self {
            weight: Param::new(
                format!("{}.weight", name),
                Tensor::new(vec![fan_in, fan_out], w).expect("weight shape"),
            ),
            bias: Param::new(format!("{}.bias", name), Tensor::row(&b)),
        }
    }

    pub fn zeros(name: &str, fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Param::new(format!("{}.weight", name), Tensor::zeros(&[fan_in, fan_out])),
            bias: Param::new(format!("{}.bias", name), Tensor::zeros(&[1, fan_out])),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn forward(&self, g: &mut Graph, x: Var, binding: Binding) -> Result<Var, NumericsError> {
        let (w, b) = match binding {
            Binding::Trainable => (g.param(&self.weight), g.param(&self.bias)),
            Binding::Frozen => (g.frozen(&self.weight), g.frozen(&self.bias)),
        };
        let xw = g.matmul(x, w)?;
        g.add_row(xw, b)
    }

    fn eval(&self, x: &Tensor) -> Result<Tensor, NumericsError> {
        let mut out = x.matmul(&self.weight.value)?;
        let n = out.cols();
        let bias = self.bias.value.data();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += bias[i % n];
        }
        Ok(out)
    }

    fn duplicate(&self) -> Self {
        Self {
            weight: self.weight.duplicate(),
            bias: self.bias.duplicate(),
        }
    }
}

/// Fully connected network: ReLU between layers, linear output.
#[derive(Debug)]
pub struct Mlp {
    layers: Vec<Linear>,
}

impl Mlp {
    /// `widths = [input, hidden..., output]`.
    pub fn new<R: Rng + ?Sized>(name: &str, widths: &[usize], rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "an MLP needs at least input and output widths");
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(&format!("{}.{}", name, i), w[0], w[1], rng))
            .collect();
        Self { layers }
    }

    pub fn zeros(name: &str, widths: &[usize]) -> Self {
        assert!(widths.len() >= 2, "an MLP needs at least input and output widths");
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::zeros(&format!("{}.{}", name, i), w[0], w[1]))
            .collect();
        Self { layers }
    }

    /// Single linear layer with identity weights and zero bias.
    pub fn identity(name: &str, n: usize) -> Self {
        let mut layer = Linear::zeros(&format!("{}.0", name), n, n);
        layer.weight.value = Tensor::eye(n);
        Self {
            layers: vec![layer],
        }
    }

    pub fn from_layers(layers: Vec<Linear>) -> Self {
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").fan_out()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(Linear::fan_out));
        w
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    fn check_input(&self, cols: usize) -> Result<(), NumericsError> {
        if cols != self.input_dim() {
            return Err(NumericsError::ShapeMismatch {
                op: "mlp.forward",
                expected: format!("{} input features", self.input_dim()),
                found: format!("{} input features", cols),
            });
        }
        Ok(())
    }

    pub fn forward(&self, g: &mut Graph, x: Var, binding: Binding) -> Result<Var, NumericsError> {
        self.check_input(g.value(x).cols())?;
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, h, binding)?;
            if i < last {
                h = g.relu(h);
            }
        }
        Ok(h)
    }

    /// Tape-free forward pass.
    pub fn eval(&self, x: &Tensor) -> Result<Tensor, NumericsError> {
        self.check_input(x.cols())?;
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.eval(&h)?;
            if i < last {
                h.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        Ok(h)
    }

    pub fn params(&self) -> impl Iterator<Item = &Param> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Deep copy with fresh parameter identities (e.g. a target network).
    pub fn duplicate(&self) -> Self {
        Self {
            layers: self.layers.iter().map(Linear::duplicate).collect(),
        }
    }

    /// `self ← (1 - tau)·self + tau·source`.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) {
        for (dst, src) in self.params_mut().into_iter().zip(source.params()) {
            for (d, s) in dst.value.data_mut().iter_mut().zip(src.value.data()) {
                *d = (1.0 - tau) * *d + tau * s;
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().map(|p| p.value.len()).sum()
    }
}
