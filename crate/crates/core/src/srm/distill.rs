use super::SrmError;
use crate::numerics::{kl_divergence, softmax, Graph, Tensor, Var};

/// `KL(softmax(h_general/T) ‖ softmax(h_domain/T))`.
pub fn distill_value(h_general: &[f64], h_domain: &[f64], temperature: f64) -> Result<f64, SrmError> {
    let p = softmax(&h_general.iter().map(|v| v / temperature).collect::<Vec<_>>());
    let q = softmax(&h_domain.iter().map(|v| v / temperature).collect::<Vec<_>>());
    Ok(kl_divergence(&p, &q)?)
}

/// Tape version of [`distill_value`]; `h_general` is `[1, d]` and the teacher
/// vector enters as a constant.
pub fn distill_loss(g: &mut Graph, h_general: Var, h_domain: &[f64], temperature: f64) -> Result<Var, SrmError> {
    let scaled = g.scale(h_general, 1.0 / temperature);
    let p = g.softmax_rows(scaled);
    let log_p = g.log_softmax_rows(scaled);
    let teacher: Vec<f64> = h_domain.iter().map(|v| v / temperature).collect();
    let max = teacher.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = teacher.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    let log_q = g.constant(Tensor::row(&teacher.iter().map(|v| v - log_z).collect::<Vec<_>>()));
    let diff = g.sub(log_p, log_q)?;
    let terms = g.mul(p, diff)?;
    Ok(g.sum(terms))
}
