use rand::Rng as _;

use super::Trajectory;
use crate::rng::{self, Rng};

/// Fixed-capacity trajectory store with reservoir eviction, so the contents
/// stay a uniform sample of everything ever inserted.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Trajectory>,
    inserted: u64,
    rng: Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> ReplayBuffer {
        ReplayBuffer {
            capacity,
            items: Vec::new(),
            inserted: 0,
            rng: rng::stream(seed, 0x7265_706c),
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

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn insert(&mut self, traj: Trajectory) {
        self.inserted += 1;
        if self.capacity == 0 {
            return;
        }
        if self.items.len() < self.capacity {
            self.items.push(traj);
        } else {
            let j = self.rng.random_range(0..self.inserted);
            if (j as usize) < self.capacity {
                self.items[j as usize] = traj;
            }
        }
    }

    /// `n` draws with replacement; empty when the buffer is.
    pub fn sample(&mut self, n: usize) -> Vec<Trajectory> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n)
            .map(|_| self.items[self.rng.random_range(0..self.items.len())].clone())
            .collect()
    }

    pub fn sample_indices(&mut self, n: usize) -> Vec<usize> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| self.rng.random_range(0..self.items.len())).collect()
    }

    pub fn get(&self, i: usize) -> &Trajectory {
        &self.items[i]
    }
}
