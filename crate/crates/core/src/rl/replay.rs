use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::env::{Action, CarState};
use crate::error::{invalid_input, Result};
use crate::rng::Rng;

pub const DEFAULT_CAPACITY: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: CarState,
    pub action: Action,
    pub reward: f64,
    pub next_state: CarState,
    pub done: bool,
}

/// Fixed-capacity FIFO of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(invalid_input("replay capacity must be positive"));
        }
        Ok(Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        })
    }

    pub fn push(&mut self, t: Transition) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.entries.iter()
    }

    /// `size` distinct transitions drawn uniformly.
    pub fn sample(&self, size: usize, rng: &mut Rng) -> Result<Vec<Transition>> {
        if size > self.entries.len() {
            return Err(invalid_input(format!(
                "cannot sample {size} from {} transitions",
                self.entries.len()
            )));
        }
        Ok(rand::seq::index::sample(rng, self.entries.len(), size)
            .into_iter()
            .map(|i| self.entries[i])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    fn tr(i: usize) -> Transition {
        let s = CarState {
            position: -0.5,
            velocity: 0.0,
        };
        Transition {
            state: s,
            action: Action::NoPush,
            reward: i as f64,
            next_state: s,
            done: false,
        }
    }

    #[test]
    fn evicts_oldest_at_capacity() {
        let mut b = ReplayBuffer::new(DEFAULT_CAPACITY).unwrap();
        for i in 0..501 {
            b.push(tr(i));
        }
        assert_eq!(b.len(), 500);
        assert_eq!(b.iter().next().unwrap().reward, 1.0);
        assert!(b.iter().all(|t| t.reward != 0.0));
    }

    #[test]
    fn sampling_is_distinct_and_bounded() {
        let mut b = ReplayBuffer::new(20).unwrap();
        for i in 0..15 {
            b.push(tr(i));
        }
        let mut r = rng_for(0, 0);
        let s = b.sample(10, &mut r).unwrap();
        let mut rewards: Vec<i64> = s.iter().map(|t| t.reward as i64).collect();
        rewards.sort();
        rewards.dedup();
        assert_eq!(rewards.len(), 10);
        assert!(b.sample(16, &mut r).is_err());
    }
}
