//! Uniform replay with strict FIFO eviction.

use std::sync::Arc;

use muse_core::error::{Error, Result};
use muse_core::rng::SplitRng;

/// Observations are shared between consecutive transitions and stored in
/// single precision.
pub type ObsVec = Arc<[f32]>;

pub fn obs_vec(v: &[f64]) -> ObsVec {
    v.iter().map(|&x| x as f32).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition<A> {
    pub obs: ObsVec,
    pub action: A,
    pub reward: f64,
    pub next_obs: ObsVec,
    /// Terminal; the target does not bootstrap from `next_obs`.
    pub done: bool,
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer<A> {
    items: Vec<Transition<A>>,
    capacity: usize,
    /// Total insertions so far; the next write goes to `inserted % capacity`.
    inserted: u64,
}

impl<A: Clone> ReplayBuffer<A> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("agent.buffer", "capacity must be positive"));
        }
        Ok(Self {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            inserted: 0,
        })
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

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, t: Transition<A>) -> Result<()> {
        if !t.reward.is_finite() {
            return Err(Error::contract(format!("non-finite reward {}", t.reward)));
        }
        let slot = (self.inserted % self.capacity as u64) as usize;
        if slot == self.items.len() {
            self.items.push(t);
        } else {
            self.items[slot] = t;
        }
        self.inserted += 1;
        Ok(())
    }

    /// Oldest-first view of the contents.
    pub fn iter_oldest_first(&self) -> impl Iterator<Item = &Transition<A>> {
        let start = if self.items.len() < self.capacity {
            0
        } else {
            (self.inserted % self.capacity as u64) as usize
        };
        self.items[start..].iter().chain(&self.items[..start])
    }

    /// `n` indices drawn uniformly with replacement.
    pub fn sample(&self, n: usize, rng: &mut SplitRng) -> Result<Vec<&Transition<A>>> {
        if self.items.is_empty() {
            return Err(Error::contract("sampling from an empty replay buffer"));
        }
        Ok((0..n)
            .map(|_| &self.items[rng.below(self.items.len())])
            .collect())
    }
}
