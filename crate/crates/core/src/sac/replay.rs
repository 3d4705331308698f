use rand::Rng;

use super::SacError;
use crate::numerics::Tensor;

/// One joint step: every DU's aligned state and raw action, concatenated.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Stacked minibatch.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub states: Tensor,
    pub actions: Tensor,
    pub rewards: Vec<f64>,
    pub next_states: Tensor,
    pub dones: Vec<bool>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn from_transitions(ts: &[&Transition]) -> Result<Self, SacError> {
        let stack = |f: &dyn Fn(&Transition) -> &[f64]| -> Result<Tensor, SacError> {
            let cols = ts.first().map_or(0, |t| f(t).len());
            let mut data = Vec::with_capacity(ts.len() * cols);
            for t in ts {
                data.extend_from_slice(f(t));
            }
            Ok(Tensor::new(vec![ts.len(), cols], data)?)
        };
        Ok(Self {
            states: stack(&|t| &t.state)?,
            actions: stack(&|t| &t.action)?,
            rewards: ts.iter().map(|t| t.reward).collect(),
            next_states: stack(&|t| &t.next_state)?,
            dones: ts.iter().map(|t| t.done).collect(),
        })
    }
}

/// Fixed-capacity ring buffer with uniform sampling (with replacement).
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            items: Vec::new(),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>, SacError> {
        if self.items.len() < batch || batch == 0 {
            return Err(SacError::InsufficientBuffer {
                have: self.items.len(),
                need: batch.max(1),
            });
        }
        Ok((0..batch).map(|_| rng.random_range(0..self.items.len())).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Batch, SacError> {
        let idx = self.sample_indices(batch, rng)?;
        let ts: Vec<&Transition> = idx.iter().map(|i| &self.items[*i]).collect();
        Batch::from_transitions(&ts)
    }
}
