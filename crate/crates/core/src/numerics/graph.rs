//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] is built fresh for every forward/backward pass. Nodes are
//! appended in evaluation order, so the reverse of insertion order is a valid
//! topological order for the backward sweep.

use std::collections::HashMap;

use super::tensor::{gemm, Layout};
use super::{NumericsError, Param, ParamId, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    Ln(Var),
    Softplus(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    SumAll(Var),
    MeanAll(Var),
    SumCols(Var),
    MeanRows(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    Transpose(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    bindings: HashMap<ParamId, Var>,
    grads: Vec<Option<Tensor>>,
}

fn mismatch(op: &'static str, expected: impl Into<String>, found: impl Into<String>) -> NumericsError {
    NumericsError::ShapeMismatch {
        op,
        expected: expected.into(),
        found: found.into(),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// A leaf that never receives gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A differentiable leaf not tied to any [`Param`].
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Binds a trainable parameter. Binding the same parameter twice returns
    /// the same node so gradients from every use are summed.
    pub fn param(&mut self, p: &Param) -> Var {
        if let Some(v) = self.bindings.get(&p.id()) {
            return *v;
        }
        let v = self.push(p.value.clone(), Op::Leaf, true);
        self.bindings.insert(p.id(), v);
        v
    }

    /// Uses a parameter's current value as a constant (frozen weights).
    pub fn frozen(&mut self, p: &Param) -> Var {
        self.constant(p.value.clone())
    }

    pub fn is_bound(&self, p: &Param) -> bool {
        self.bindings.contains_key(&p.id())
    }

    fn check_same(&self, op: &'static str, a: Var, b: Var) -> Result<(), NumericsError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(mismatch(op, format!("{:?}", sa), format!("{:?}", sb)));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let v = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.check_same("add", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    /// `a + row` with `row: [1, n]` broadcast over the rows of `a: [m, n]`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NumericsError> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(mismatch(
                "add_row",
                format!("[1, {}]", va.cols()),
                format!("{:?}", vr.shape()),
            ));
        }
        let n = va.cols();
        let mut out = va.clone();
        for (i, x) in out.data_mut().iter_mut().enumerate() {
            *x += vr.data()[i % n];
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(out, Op::AddRow(a, row), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.check_same("sub", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.check_same("mul", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x * c);
        let rg = self.rg(a);
        self.push(v, Op::Scale(a, c), rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        let rg = self.rg(a);
        self.push(v, Op::AddScalar(a), rg)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let v = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(v, op, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Ln(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus, Op::Softplus(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    /// Hard clamp; the gradient is zero outside `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(v, Op::SumAll(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let v = Tensor::scalar(t.sum() / t.len().max(1) as f64);
        let rg = self.rg(a);
        self.push(v, Op::MeanAll(a), rg)
    }

    /// Row sums: `[m, n] -> [m, 1]`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data: Vec<f64> = (0..t.rows()).map(|r| t.row_slice(r).iter().sum()).collect();
        let v = Tensor::new(vec![t.rows(), 1], data).expect("row sums");
        let rg = self.rg(a);
        self.push(v, Op::SumCols(a), rg)
    }

    /// Column means (pooling over rows): `[m, n] -> [1, n]`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (m, n) = (t.rows(), t.cols());
        let mut out = vec![0.0; n];
        for r in 0..m {
            for (o, x) in out.iter_mut().zip(t.row_slice(r)) {
                *o += x;
            }
        }
        for o in &mut out {
            *o /= m as f64;
        }
        let rg = self.rg(a);
        self.push(Tensor::row(&out), Op::MeanRows(a), rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut out = t.clone();
        let n = t.cols();
        for r in 0..t.rows() {
            let row = &mut out.data_mut()[r * n..(r + 1) * n];
            softmax_in_place(row);
        }
        let rg = self.rg(a);
        self.push(out, Op::SoftmaxRows(a), rg)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut out = t.clone();
        let n = t.cols();
        for r in 0..t.rows() {
            let row = &mut out.data_mut()[r * n..(r + 1) * n];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            for x in row.iter_mut() {
                *x -= lse;
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::LogSoftmaxRows(a), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let first = parts
            .first()
            .ok_or_else(|| mismatch("concat_cols", "at least one part", "none"))?;
        let m = self.value(*first).rows();
        let mut n = 0;
        for p in parts {
            let t = self.value(*p);
            if t.rows() != m {
                return Err(mismatch("concat_cols", format!("{} rows", m), format!("{:?}", t.shape())));
            }
            n += t.cols();
        }
        let mut data = Vec::with_capacity(m * n);
        for r in 0..m {
            for p in parts {
                data.extend_from_slice(self.value(*p).row_slice(r));
            }
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        let v = Tensor::new(vec![m, n], data)?;
        Ok(self.push(v, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let first = parts
            .first()
            .ok_or_else(|| mismatch("concat_rows", "at least one part", "none"))?;
        let n = self.value(*first).cols();
        let mut data = Vec::new();
        let mut m = 0;
        for p in parts {
            let t = self.value(*p);
            if t.cols() != n {
                return Err(mismatch("concat_rows", format!("{} cols", n), format!("{:?}", t.shape())));
            }
            m += t.rows();
            data.extend_from_slice(t.data());
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        let v = Tensor::new(vec![m, n], data)?;
        Ok(self.push(v, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, NumericsError> {
        let t = self.value(a);
        if start > end || end > t.cols() {
            return Err(mismatch(
                "slice_cols",
                format!("range within {} cols", t.cols()),
                format!("{}..{}", start, end),
            ));
        }
        let mut data = Vec::with_capacity(t.rows() * (end - start));
        for r in 0..t.rows() {
            data.extend_from_slice(&t.row_slice(r)[start..end]);
        }
        let v = Tensor::new(vec![t.rows(), end - start], data)?;
        let rg = self.rg(a);
        Ok(self.push(v, Op::SliceCols(a, start), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(v, Op::Transpose(a), rg)
    }

    /// Runs the backward sweep from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<(), NumericsError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(mismatch("backward", "scalar loss", format!("{:?}", lv.shape())));
        }
        if !self.rg(loss) {
            return Err(NumericsError::Detached);
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.rg(*a) {
                    let buf = slot(grads, *a, ta.shape());
                    // dA = dC · Bᵀ
                    gemm(m, n, k, g.data(), Layout::Normal, tb.data(), Layout::Transposed, buf.data_mut(), 1.0);
                }
                if self.rg(*b) {
                    let buf = slot(grads, *b, tb.shape());
                    // dB = Aᵀ · dC
                    gemm(k, m, n, ta.data(), Layout::Transposed, g.data(), Layout::Normal, buf.data_mut(), 1.0);
                }
            }
            Op::Add(a, b) => {
                self.accum(grads, *a, g);
                self.accum(grads, *b, g);
            }
            Op::AddRow(a, row) => {
                self.accum(grads, *a, g);
                if self.rg(*row) {
                    let n = g.cols();
                    let mut s = vec![0.0; n];
                    for r in 0..g.rows() {
                        for (o, x) in s.iter_mut().zip(g.row_slice(r)) {
                            *o += x;
                        }
                    }
                    self.accum(grads, *row, &Tensor::row(&s));
                }
            }
            Op::Sub(a, b) => {
                self.accum(grads, *a, g);
                if self.rg(*b) {
                    self.accum(grads, *b, &g.map(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    self.accum(grads, *a, &g.zip_map(self.value(*b), |d, x| d * x));
                }
                if self.rg(*b) {
                    self.accum(grads, *b, &g.zip_map(self.value(*a), |d, x| d * x));
                }
            }
            Op::Scale(a, c) => self.accum(grads, *a, &g.map(|d| d * c)),
            Op::AddScalar(a) => self.accum(grads, *a, g),
            Op::Relu(a) => {
                let x = self.value(*a);
                self.accum(grads, *a, &g.zip_map(x, |d, x| if x > 0.0 { d } else { 0.0 }));
            }
            Op::Tanh(a) => self.accum(grads, *a, &g.zip_map(y, |d, t| d * (1.0 - t * t))),
            Op::Exp(a) => self.accum(grads, *a, &g.zip_map(y, |d, e| d * e)),
            Op::Ln(a) => {
                let x = self.value(*a);
                self.accum(grads, *a, &g.zip_map(x, |d, x| d / x));
            }
            Op::Softplus(a) => {
                let x = self.value(*a);
                self.accum(grads, *a, &g.zip_map(x, |d, x| d * sigmoid(x)));
            }
            Op::Square(a) => {
                let x = self.value(*a);
                self.accum(grads, *a, &g.zip_map(x, |d, x| 2.0 * d * x));
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.value(*a);
                let (lo, hi) = (*lo, *hi);
                self.accum(
                    grads,
                    *a,
                    &g.zip_map(x, |d, x| if x >= lo && x <= hi { d } else { 0.0 }),
                );
            }
            Op::SumAll(a) => {
                let shape = self.value(*a).shape().to_vec();
                self.accum(grads, *a, &Tensor::full(&shape, g.item()));
            }
            Op::MeanAll(a) => {
                let t = self.value(*a);
                let n = t.len().max(1) as f64;
                self.accum(grads, *a, &Tensor::full(t.shape(), g.item() / n));
            }
            Op::SumCols(a) => {
                let t = self.value(*a);
                let n = t.cols();
                let mut out = Tensor::zeros(t.shape());
                for (idx, o) in out.data_mut().iter_mut().enumerate() {
                    *o = g.data()[idx / n];
                }
                self.accum(grads, *a, &out);
            }
            Op::MeanRows(a) => {
                let t = self.value(*a);
                let (m, n) = (t.rows(), t.cols());
                let mut out = Tensor::zeros(t.shape());
                for (idx, o) in out.data_mut().iter_mut().enumerate() {
                    *o = g.data()[idx % n] / m as f64;
                }
                self.accum(grads, *a, &out);
            }
            Op::SoftmaxRows(a) => {
                let n = y.cols();
                let mut out = Tensor::zeros(y.shape());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row_slice(r), g.row_slice(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(p, d)| p * d).sum();
                    for c in 0..n {
                        out.data_mut()[r * n + c] = yr[c] * (gr[c] - dot);
                    }
                }
                self.accum(grads, *a, &out);
            }
            Op::LogSoftmaxRows(a) => {
                let n = y.cols();
                let mut out = Tensor::zeros(y.shape());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row_slice(r), g.row_slice(r));
                    let total: f64 = gr.iter().sum();
                    for c in 0..n {
                        out.data_mut()[r * n + c] = gr[c] - yr[c].exp() * total;
                    }
                }
                self.accum(grads, *a, &out);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let t = self.value(*p);
                    let w = t.cols();
                    if self.rg(*p) {
                        let mut piece = Vec::with_capacity(t.len());
                        for r in 0..g.rows() {
                            piece.extend_from_slice(&g.row_slice(r)[offset..offset + w]);
                        }
                        let piece = Tensor::new(t.shape().to_vec(), piece).expect("concat grad");
                        self.accum(grads, *p, &piece);
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let t = self.value(*p);
                    if self.rg(*p) {
                        let piece = g.data()[offset..offset + t.len()].to_vec();
                        let piece = Tensor::new(t.shape().to_vec(), piece).expect("concat grad");
                        self.accum(grads, *p, &piece);
                    }
                    offset += t.len();
                }
            }
            Op::SliceCols(a, start) => {
                if self.rg(*a) {
                    let t = self.value(*a);
                    let (n, w) = (t.cols(), g.cols());
                    let buf = slot(grads, *a, t.shape());
                    for r in 0..g.rows() {
                        for c in 0..w {
                            buf.data_mut()[r * n + start + c] += g.data()[r * w + c];
                        }
                    }
                }
            }
            Op::Transpose(a) => self.accum(grads, *a, &g.transpose()),
        }
    }

    fn accum(&self, grads: &mut [Option<Tensor>], v: Var, g: &Tensor) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(g),
            slot @ None => *slot = Some(g.clone()),
        }
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for a bound parameter; `None` if unbound or unreachable.
    pub fn param_grad(&self, p: &Param) -> Option<&Tensor> {
        self.bindings.get(&p.id()).and_then(|v| self.grad(*v))
    }

    /// Moves this graph's gradients into the parameters' grad buffers.
    pub fn accumulate_into<'a>(&self, params: impl IntoIterator<Item = &'a mut Param>) {
        for p in params {
            if let Some(g) = self.param_grad(p) {
                p.accumulate_grad(g);
            }
        }
    }
}

fn slot<'a>(grads: &'a mut [Option<Tensor>], v: Var, shape: &[usize]) -> &'a mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(shape))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::new();
        let x = g.input(Tensor::row(&[1.0, 2.0]));
        let sq = g.square(x);
        let loss = g.sum(sq);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn constant_loss_is_detached() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::scalar(3.0));
        let x = g.input(Tensor::scalar(1.0));
        let _ = g.add(x, c).unwrap();
        let loss = g.scale(c, 2.0);
        assert!(matches!(g.backward(loss), Err(NumericsError::Detached)));
    }

    #[test]
    fn gradient_of_a_constant_term_is_zero() {
        let mut g = Graph::new();
        let x = g.input(Tensor::row(&[0.3, -0.7]));
        let c = g.constant(Tensor::row(&[5.0, 5.0]));
        let zero = g.scale(x, 0.0);
        let s = g.add(zero, c).unwrap();
        let loss = g.sum(s);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut g = Graph::new();
        let x = g.input(Tensor::row(&[1.0, 2.0]));
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn param_binding_is_shared() {
        let p = Param::new("w", Tensor::scalar(3.0));
        let mut g = Graph::new();
        let a = g.param(&p);
        let b = g.param(&p);
        assert_eq!(a, b);
        let prod = g.mul(a, b).unwrap();
        g.backward(prod).unwrap();
        assert_eq!(g.param_grad(&p).unwrap().item(), 6.0);
    }
}
