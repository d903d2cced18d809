use alloc::vec::Vec;

use rand::Rng;

/// One joint step: all agents' observations, raw actions and rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<f64>,
    /// Last slot of an episode; its target is the reward alone.
    pub done: bool,
}

/// Fixed-capacity ring of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), items: Vec::new(), next: 0 }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
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

    pub fn get(&self, idx: usize) -> Option<&Transition> {
        self.items.get(idx)
    }

    /// `batch` uniform draws with replacement; empty when nothing is stored.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<&Transition> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..batch).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(tag: f64) -> Transition {
        Transition { obs: alloc::vec![tag], actions: alloc::vec![], rewards: alloc::vec![tag], next_obs: alloc::vec![], done: false }
    }

    #[test]
    fn empty_samples_nothing() {
        let rb = ReplayBuffer::new(4);
        assert!(rb.sample(3, &mut ChaCha8Rng::seed_from_u64(0)).is_empty());
    }

    proptest! {
        #[test]
        fn samples_only_stored_items(cap in 1usize..20, pushes in 0usize..60, seed in 0u64..1000) {
            let mut rb = ReplayBuffer::new(cap);
            for k in 0..pushes {
                rb.push(tr(k as f64));
                prop_assert!(rb.len() <= cap);
            }
            let live: Vec<f64> = (pushes.saturating_sub(cap)..pushes).map(|k| k as f64).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for t in rb.sample(32, &mut rng) {
                prop_assert!(live.contains(&t.obs[0]));
            }
        }
    }
}
