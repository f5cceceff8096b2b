//! Ring-buffer experience replay with uniform sampling.

use std::sync::{Arc, Mutex};

use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    /// Joint action of all robots, each component in [−1, 1].
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
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
        Self { capacity, items: Vec::with_capacity(capacity.min(1 << 16)), next: 0 }
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

    /// Appends, evicting the oldest transition when full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Stored transition at ring slot `i`.
    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// Indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| rng.random_range(0..self.items.len())).collect()
    }

    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<Transition> {
        self.sample_indices(n, rng).into_iter().map(|i| self.items[i].clone()).collect()
    }

    /// Oldest to newest.
    pub fn iter_ordered(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.next };
        self.items[split..].iter().chain(self.items[..split].iter())
    }
}

/// Replay buffer shared between rollout workers and a learner; the mutex
/// serializes appends and sampled reads.
#[derive(Debug, Clone)]
pub struct SharedReplay(Arc<Mutex<ReplayBuffer>>);

impl SharedReplay {
    pub fn new(capacity: usize) -> Self {
        Self(Arc::new(Mutex::new(ReplayBuffer::new(capacity))))
    }

    pub fn push(&self, t: Transition) {
        self.0.lock().expect("replay lock").push(t);
    }

    pub fn extend(&self, ts: impl IntoIterator<Item = Transition>) {
        let mut g = self.0.lock().expect("replay lock");
        for t in ts {
            g.push(t);
        }
    }

    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<Transition> {
        self.0.lock().expect("replay lock").sample(n, rng)
    }

    pub fn len(&self) -> usize {
        self.0.lock().expect("replay lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
