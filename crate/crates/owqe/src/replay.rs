//! Shared experience replay.
//!
//! A fixed-capacity ring buffer of transitions. Every ensemble member trains
//! from the same buffer; only the exploration that *fills* it differs per
//! run, so the buffer itself carries no randomness — callers pass an RNG to
//! `sample`.

use rand::Rng;

use crate::{Error, Result};

/// One environment step as stored for off-policy training.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// True termination of the episode (not an artificial time limit), which
    /// zeroes the bootstrap term in TD targets.
    pub terminal: bool,
}

/// Fixed-capacity ring buffer with uniform random sampling.
#[derive(Debug)]
pub struct ReplayBuffer {
    slots: Vec<Transition>,
    capacity: usize,
    /// Next slot to overwrite once the buffer is full.
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay capacity must be positive"));
        }
        Ok(ReplayBuffer {
            slots: Vec::new(),
            capacity,
            head: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Appends a transition, overwriting the oldest one once full.
    pub fn push(&mut self, t: Transition) {
        if self.slots.len() < self.capacity {
            self.slots.push(t);
        } else {
            self.slots[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Draws `n` transitions uniformly with replacement.
    pub fn sample<'a, R: Rng + ?Sized>(
        &'a self,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<&'a Transition>> {
        if self.slots.is_empty() {
            return Err(Error::InsufficientData { have: 0, need: n });
        }
        Ok((0..n)
            .map(|_| &self.slots[rng.random_range(0..self.slots.len())])
            .collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.slots.iter()
    }
}
