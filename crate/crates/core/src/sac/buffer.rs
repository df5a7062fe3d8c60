//! Fixed-capacity replay ring.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// Terminal, not time-limit truncation.
    pub done: bool,
}

/// Column-stacked transitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub states: Matrix,
    pub actions: Matrix,
    /// `n x 1`.
    pub rewards: Matrix,
    pub next_states: Matrix,
    /// `n x 1` of 0/1.
    pub dones: Matrix,
}

impl Batch {
    pub fn from_transitions(items: &[&Transition]) -> Self {
        let col = |f: &dyn Fn(&Transition) -> f64| {
            Matrix::from_vec(items.len(), 1, items.iter().map(|t| f(t)).collect())
        };
        Self {
            states: Matrix::from_rows(&items.iter().map(|t| t.state.as_slice()).collect::<Vec<_>>()),
            actions: Matrix::from_rows(&items.iter().map(|t| t.action.as_slice()).collect::<Vec<_>>()),
            rewards: col(&|t| t.reward),
            next_states: Matrix::from_rows(
                &items.iter().map(|t| t.next_state.as_slice()).collect::<Vec<_>>(),
            ),
            dones: col(&|t| if t.done { 1.0 } else { 0.0 }),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    /// Slot overwritten by the next push once full.
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::new(),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// `n` indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<usize> {
        assert!(!self.items.is_empty(), "sampling from an empty buffer");
        (0..n).map(|_| rng.random_range(0..self.items.len())).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Batch {
        let idx = self.sample_indices(rng, n);
        Batch::from_transitions(&idx.iter().map(|&i| &self.items[i]).collect::<Vec<_>>())
    }
}
