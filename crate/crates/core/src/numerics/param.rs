use std::sync::atomic::{AtomicU64, Ordering};

use sha2::{Digest, Sha256};

use super::Tensor;

static NEXT_PARAM_ID: AtomicU64 = AtomicU64::new(1);

/// Process-unique identity of a parameter, used to bind it into a [`Graph`](super::Graph).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(u64);

impl ParamId {
    fn fresh() -> Self {
        Self(NEXT_PARAM_ID.fetch_add(1, Ordering::Relaxed))
    }
}

/// A named trainable array together with its gradient buffer.
///
/// `Param` deliberately does not implement `Clone`: a copy must get a new
/// identity (see [`Param::duplicate`]) or two networks would alias on a tape.
#[derive(Debug)]
pub struct Param {
    id: ParamId,
    name: String,
    pub value: Tensor,
    grad: Option<Tensor>,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        Self {
            id: ParamId::fresh(),
            name: name.into(),
            value,
            grad: None,
        }
    }

    pub fn id(&self) -> ParamId {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Same name and values, fresh identity, no gradient.
    pub fn duplicate(&self) -> Self {
        Self::new(self.name.clone(), self.value.clone())
    }

    pub fn grad(&self) -> Option<&Tensor> {
        self.grad.as_ref()
    }

    pub fn accumulate_grad(&mut self, g: &Tensor) {
        match &mut self.grad {
            Some(existing) => existing.add_assign(g),
            None => self.grad = Some(g.clone()),
        }
    }

    pub fn take_grad(&mut self) -> Option<Tensor> {
        self.grad.take()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }
}

/// SHA-256 over parameter names, shapes and exact value bits, as lowercase hex.
pub fn param_hash<'a>(params: impl IntoIterator<Item = &'a Param>) -> String {
    let mut hasher = Sha256::new();
    for p in params {
        hasher.update(p.name().as_bytes());
        for d in p.value.shape() {
            hasher.update((*d as u64).to_le_bytes());
        }
        for v in p.value.data() {
            hasher.update(v.to_bits().to_le_bytes());
        }
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{:02x}", b))
        .collect()
}
