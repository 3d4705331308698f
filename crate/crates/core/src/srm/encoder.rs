use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SrmError;
use crate::numerics::{param_hash, Binding, Graph, Mlp, Param, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub layers: usize,
    /// Feed-forward hidden width as a multiple of `d_model`.
    pub ff_mult: usize,
    /// Add sinusoidal position codes to the fused sequence.
    pub positional: bool,
    pub max_len: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            layers: 2,
            ff_mult: 2,
            positional: true,
            max_len: 64,
        }
    }
}

#[derive(Debug)]
struct Block {
    wq: Param,
    wk: Param,
    wv: Param,
    wo: Param,
    ff: Mlp,
}

fn uniform(name: String, rows: usize, cols: usize, bound: f64, rng: &mut ChaCha8Rng) -> Param {
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
    Param::new(name, Tensor::new(vec![rows, cols], data).expect("shape"))
}

fn sinusoidal(max_len: usize, d: usize) -> Tensor {
    let mut t = Tensor::zeros(&[max_len, d]);
    for pos in 0..max_len {
        for i in 0..d {
            let rate = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = pos as f64 * rate;
            t.set(pos, i, if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    t
}

/// Small seeded transformer-style mixer whose weights never change:
/// token embedding, optional sinusoidal positions, then `layers` blocks of
/// single-head self-attention and a ReLU feed-forward, both residual, and a
/// final mean-pool over the sequence.
#[derive(Debug)]
pub struct FrozenEncoder {
    config: EncoderConfig,
    embedding: Param,
    positions: Tensor,
    blocks: Vec<Block>,
}

impl FrozenEncoder {
    pub fn new(name: &str, vocab_size: usize, config: EncoderConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_model;
        let embedding = uniform(format!("{}.embedding", name), vocab_size, d, 1.0, &mut rng);
        let bound = 1.0 / (d as f64).sqrt();
        let blocks = (0..config.layers)
            .map(|i| Block {
                wq: uniform(format!("{}.block{}.wq", name, i), d, d, bound, &mut rng),
                wk: uniform(format!("{}.block{}.wk", name, i), d, d, bound, &mut rng),
                wv: uniform(format!("{}.block{}.wv", name, i), d, d, bound, &mut rng),
                wo: uniform(format!("{}.block{}.wo", name, i), d, d, bound, &mut rng),
                ff: Mlp::new(&format!("{}.block{}.ff", name, i), &[d, config.ff_mult * d, d], &mut rng),
            })
            .collect();
        let positions = sinusoidal(config.max_len, d);
        Self {
            config,
            embedding,
            positions,
            blocks,
        }
    }

    pub fn d_model(&self) -> usize {
        self.config.d_model
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.value.rows()
    }

    pub fn params(&self) -> impl Iterator<Item = &Param> {
        std::iter::once(&self.embedding).chain(
            self.blocks
                .iter()
                .flat_map(|b| [&b.wq, &b.wk, &b.wv, &b.wo].into_iter().chain(b.ff.params())),
        )
    }

    pub fn hash(&self) -> String {
        param_hash(self.params())
    }

    /// Looks up frozen embeddings for `tokens`, one row each.
    pub fn embed_tokens(&self, tokens: &[usize]) -> Result<Tensor, SrmError> {
        let d = self.d_model();
        let mut data = Vec::with_capacity(tokens.len() * d);
        for &t in tokens {
            if t >= self.vocab_size() {
                return Err(SrmError::UnknownToken(t));
            }
            data.extend_from_slice(self.embedding.value.row_slice(t));
        }
        Ok(Tensor::new(vec![tokens.len(), d], data)?)
    }

    /// Encodes a `[len, d_model]` sequence on the tape, returning `[1, d_model]`.
    /// Encoder weights enter as constants, so gradients stop at the input.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, SrmError> {
        let len = g.value(x).rows();
        if len == 0 {
            return Err(SrmError::EmptySequence);
        }
        if len > self.config.max_len {
            return Err(SrmError::SequenceTooLong {
                len,
                max: self.config.max_len,
            });
        }
        let mut h = x;
        if self.config.positional {
            let d = self.d_model();
            let pos = Tensor::new(vec![len, d], self.positions.data()[..len * d].to_vec())?;
            let pos = g.constant(pos);
            h = g.add(h, pos)?;
        }
        let scale = 1.0 / (self.d_model() as f64).sqrt();
        for b in &self.blocks {
            let (wq, wk, wv, wo) = (g.frozen(&b.wq), g.frozen(&b.wk), g.frozen(&b.wv), g.frozen(&b.wo));
            let q = g.matmul(h, wq)?;
            let k = g.matmul(h, wk)?;
            let v = g.matmul(h, wv)?;
            let kt = g.transpose(k);
            let scores = g.matmul(q, kt)?;
            let scores = g.scale(scores, scale);
            let attn = g.softmax_rows(scores);
            let mixed = g.matmul(attn, v)?;
            let out = g.matmul(mixed, wo)?;
            h = g.add(h, out)?;
            let ff = b.ff.forward(g, h, Binding::Frozen)?;
            h = g.add(h, ff)?;
        }
        Ok(g.mean_rows(h))
    }

    /// Tape-free encoding of a `[len, d_model]` sequence.
    pub fn encode_rows(&self, rows: &Tensor) -> Result<Vec<f64>, SrmError> {
        let mut g = Graph::new();
        let x = g.constant(rows.clone());
        let h = self.forward(&mut g, x)?;
        Ok(g.value(h).data().to_vec())
    }
}

/// Trainable prompt rows appended after the domain prompt.
#[derive(Debug)]
pub struct LearnablePrompts {
    pub param: Param,
}

impl LearnablePrompts {
    pub fn new<R: Rng + ?Sized>(n: usize, d_model: usize, rng: &mut R) -> Self {
        let data = (0..n * d_model).map(|_| rng.random_range(-0.5..0.5)).collect();
        Self {
            param: Param::new("prompts.learnable", Tensor::new(vec![n, d_model], data).expect("shape")),
        }
    }

    pub fn n(&self) -> usize {
        self.param.value.rows()
    }

    pub fn hash(&self) -> String {
        param_hash([&self.param])
    }
}

/// Fused encoder input `[P_domain, P_learnable]` as embedding rows.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptSequence {
    pub domain_len: usize,
    pub n_learnable: usize,
    pub rows: Tensor,
}

impl PromptSequence {
    pub fn len(&self) -> usize {
        self.domain_len + self.n_learnable
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Embeds `domain_tokens` with the encoder's frozen table and appends the
/// learnable rows.
pub fn fuse(domain_tokens: &[usize], lp: Option<&LearnablePrompts>, enc: &FrozenEncoder) -> Result<PromptSequence, SrmError> {
    let domain = enc.embed_tokens(domain_tokens)?;
    let d = enc.d_model();
    let mut data = domain.into_data();
    let n = lp.map_or(0, LearnablePrompts::n);
    if let Some(lp) = lp {
        data.extend_from_slice(lp.param.value.data());
    }
    Ok(PromptSequence {
        domain_len: domain_tokens.len(),
        n_learnable: n,
        rows: Tensor::new(vec![domain_tokens.len() + n, d], data)?,
    })
}

/// Tape version of [`fuse`]: the learnable rows are bound as a trainable
/// parameter, the domain rows as constants.
pub fn fuse_on_tape(
    g: &mut Graph,
    domain_tokens: &[usize],
    lp: Option<&LearnablePrompts>,
    enc: &FrozenEncoder,
) -> Result<Var, SrmError> {
    let mut parts = Vec::with_capacity(2);
    if !domain_tokens.is_empty() {
        parts.push(g.constant(enc.embed_tokens(domain_tokens)?));
    }
    if let Some(lp) = lp.filter(|lp| lp.n() > 0) {
        parts.push(g.param(&lp.param));
    }
    match parts.len() {
        0 => Err(SrmError::EmptySequence),
        1 => Ok(parts[0]),
        _ => Ok(g.concat_rows(&parts)?),
    }
}

/// Mean-pooled encoder output for a fused sequence.
pub fn encode(seq: &PromptSequence, enc: &FrozenEncoder) -> Result<Vec<f64>, SrmError> {
    enc.encode_rows(&seq.rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encoder(seed: u64) -> FrozenEncoder {
        FrozenEncoder::new("enc", 16, EncoderConfig::default(), seed)
    }

    fn prompts(n: usize) -> LearnablePrompts {
        LearnablePrompts::new(n, 64, &mut ChaCha8Rng::seed_from_u64(9))
    }

    #[test]
    fn fused_length_and_order() {
        let enc = encoder(1);
        let tokens: Vec<usize> = (0..16).collect();
        let lp = prompts(8);
        let seq = fuse(&tokens, Some(&lp), &enc).unwrap();
        assert_eq!(seq.rows.rows(), 24);
        assert_eq!(seq.rows.row_slice(3), enc.embed_tokens(&[3]).unwrap().data());
        assert_eq!(seq.rows.row_slice(16), lp.param.value.row_slice(0));

        let alone = fuse(&tokens, Some(&prompts(0)), &enc).unwrap();
        assert_eq!(alone.rows, enc.embed_tokens(&tokens).unwrap());
    }

    #[test]
    fn swapping_learnable_rows_swaps_fused_rows() {
        let enc = encoder(1);
        let tokens = [1, 2, 3];
        let mut lp = prompts(4);
        let before = fuse(&tokens, Some(&lp), &enc).unwrap();
        let (r0, r2) = (lp.param.value.row_slice(0).to_vec(), lp.param.value.row_slice(2).to_vec());
        for c in 0..64 {
            lp.param.value.set(0, c, r2[c]);
            lp.param.value.set(2, c, r0[c]);
        }
        let after = fuse(&tokens, Some(&lp), &enc).unwrap();
        for r in 0..7 {
            let expected = match r {
                3 => 5,
                5 => 3,
                r => r,
            };
            assert_eq!(after.rows.row_slice(r), before.rows.row_slice(expected));
        }
    }

    #[test]
    fn encoding_is_deterministic_and_fixed_width() {
        let enc = encoder(4);
        let lp = prompts(8);
        for len in [1usize, 5, 16] {
            let tokens: Vec<usize> = (0..len).map(|i| i % 16).collect();
            let seq = fuse(&tokens, Some(&lp), &enc).unwrap();
            let a = encode(&seq, &enc).unwrap();
            assert_eq!(a.len(), 64);
            assert_eq!(a, encode(&seq, &enc).unwrap());
        }
        assert_eq!(encoder(4).hash(), enc.hash());
        assert_ne!(encoder(5).hash(), enc.hash());
    }

    #[test]
    fn unknown_token_is_rejected() {
        assert!(matches!(encoder(1).embed_tokens(&[16]), Err(SrmError::UnknownToken(16))));
    }

    #[test]
    fn gradient_reaches_prompts_only() {
        let enc = encoder(2);
        let lp = prompts(8);
        let mut g = Graph::new();
        let x = fuse_on_tape(&mut g, &[1, 4, 7], Some(&lp), &enc).unwrap();
        let h = enc.forward(&mut g, x).unwrap();
        let sq = g.square(h);
        let loss = g.sum(sq);
        g.backward(loss).unwrap();
        let grad = g.param_grad(&lp.param).unwrap();
        assert!(grad.norm() > 0.0);
        assert!(enc.params().all(|p| g.param_grad(p).is_none() && !g.is_bound(p)));
    }

    #[test]
    fn order_matters_with_positions() {
        let enc = encoder(3);
        let lp = prompts(8);
        let tokens = [2, 5, 9, 0, 0];
        let forward = fuse(&tokens, Some(&lp), &enc).unwrap();
        let domain = enc.embed_tokens(&tokens).unwrap();
        let mut swapped = lp.param.value.data().to_vec();
        swapped.extend_from_slice(domain.data());
        let swapped = Tensor::new(vec![13, 64], swapped).unwrap();
        let a = encode(&forward, &enc).unwrap();
        let b = enc.encode_rows(&swapped).unwrap();
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-9));
    }
}
