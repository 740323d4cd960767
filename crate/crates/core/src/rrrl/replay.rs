use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::RlError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: [f64; 6],
    pub a: usize,
    pub r: f64,
    pub s_next: [f64; 6],
    pub terminal: bool,
}

/// Binary tree over a fixed number of leaves where every inner node holds
/// `combine(left, right)`. Inner nodes are recomputed from their children on
/// each update, so no rounding drift accumulates.
#[derive(Debug, Clone)]
struct Tree {
    leaves: usize,
    nodes: Vec<f64>,
    combine: fn(f64, f64) -> f64,
}

impl Tree {
    fn new(capacity: usize, combine: fn(f64, f64) -> f64) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        Self {
            leaves,
            nodes: vec![0.0; 2 * leaves],
            combine,
        }
    }

    fn set(&mut self, i: usize, value: f64) {
        let mut n = i + self.leaves;
        self.nodes[n] = value;
        while n > 1 {
            n /= 2;
            self.nodes[n] = (self.combine)(self.nodes[2 * n], self.nodes[2 * n + 1]);
        }
    }

    fn get(&self, i: usize) -> f64 {
        self.nodes[i + self.leaves]
    }

    fn root(&self) -> f64 {
        self.nodes[1]
    }
}

/// Sum tree over leaf priorities, supporting prefix-sum search.
#[derive(Debug, Clone)]
pub struct SumTree(Tree);

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        Self(Tree::new(capacity, |a, b| a + b))
    }

    pub fn set(&mut self, i: usize, value: f64) {
        self.0.set(i, value)
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0.get(i)
    }

    pub fn total(&self) -> f64 {
        self.0.root()
    }

    /// Leaf index whose cumulative interval contains `mass`.
    pub fn find(&self, mut mass: f64) -> usize {
        let t = &self.0;
        let mut n = 1;
        while n < t.leaves {
            let left = t.nodes[2 * n];
            if mass < left {
                n *= 2;
            } else {
                mass -= left;
                n = 2 * n + 1;
            }
        }
        n - t.leaves
    }
}

/// Proportional prioritized replay memory: ring buffer plus a sum tree of
/// `p^alpha` and a max tree of raw priorities.
#[derive(Debug, Clone)]
pub struct PrioritizedReplay {
    capacity: usize,
    alpha: f64,
    data: Vec<Transition>,
    next: usize,
    sums: SumTree,
    maxes: Tree,
}

#[derive(Debug, Clone)]
pub struct ReplaySample {
    pub indices: Vec<usize>,
    pub transitions: Vec<Transition>,
    pub weights: Vec<f64>,
}

impl PrioritizedReplay {
    pub fn new(capacity: usize, alpha: f64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            alpha,
            data: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            sums: SumTree::new(capacity),
            maxes: Tree::new(capacity, f64::max),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Raw priority of slot `i`.
    pub fn priority(&self, i: usize) -> f64 {
        self.maxes.get(i)
    }

    /// Sum of `p^alpha` over stored transitions.
    pub fn total(&self) -> f64 {
        self.sums.total()
    }

    pub fn leaf_sum(&self) -> f64 {
        (0..self.len()).map(|i| self.sums.get(i)).sum()
    }

    pub fn max_priority(&self) -> f64 {
        if self.is_empty() {
            1.0
        } else {
            self.maxes.root()
        }
    }

    /// Stores `t` with the current maximum priority, evicting the oldest
    /// entry once full. Returns the slot used.
    pub fn push(&mut self, t: Transition) -> usize {
        let p = self.max_priority();
        let slot = self.next;
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[slot] = t;
        }
        self.set_priority(slot, p);
        self.next = (self.next + 1) % self.capacity;
        slot
    }

    pub fn set_priority(&mut self, i: usize, p: f64) {
        assert!(i < self.len(), "slot {i} not filled");
        self.maxes.set(i, p);
        self.sums.set(i, p.powf(self.alpha));
    }

    pub fn update_priorities(&mut self, indices: &[usize], priorities: &[f64]) {
        for (&i, &p) in indices.iter().zip(priorities) {
            self.set_priority(i, p);
        }
    }

    /// Stratified proportional sampling with normalized importance weights.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        batch: usize,
        beta: f64,
        rng: &mut R,
    ) -> Result<ReplaySample, RlError> {
        if self.len() < batch || batch == 0 {
            return Err(RlError::UnderfullMemory {
                size: self.len(),
                batch,
            });
        }
        let total = self.sums.total();
        let segment = total / batch as f64;
        let n = self.len() as f64;
        let mut indices = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        for k in 0..batch {
            let mass = segment * (k as f64 + rng.random::<f64>());
            // rounding can land on an empty trailing leaf
            let i = self.sums.find(mass.min(total * (1.0 - 1e-12))).min(self.len() - 1);
            let prob = self.sums.get(i) / total;
            indices.push(i);
            weights.push((n * prob).powf(-beta));
        }
        let w_max = weights.iter().cloned().fold(0.0, f64::max);
        for w in &mut weights {
            *w /= w_max;
        }
        let transitions = indices.iter().map(|&i| self.data[i].clone()).collect();
        Ok(ReplaySample {
            indices,
            transitions,
            weights,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(r: f64) -> Transition {
        Transition {
            s: [0.0; 6],
            a: 0,
            r,
            s_next: [0.0; 6],
            terminal: false,
        }
    }

    #[test]
    fn first_insert_gets_unit_priority() {
        let mut m = PrioritizedReplay::new(8, 0.6);
        m.push(t(0.0));
        assert_eq!(m.priority(0), 1.0);
    }

    #[test]
    fn insert_takes_current_max() {
        let mut m = PrioritizedReplay::new(8, 0.6);
        m.push(t(0.0));
        m.push(t(1.0));
        m.update_priorities(&[0, 1], &[0.2, 3.0]);
        let slot = m.push(t(2.0));
        assert_eq!(m.priority(slot), 3.0);
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut m = PrioritizedReplay::new(2, 0.6);
        m.push(t(0.0));
        m.push(t(1.0));
        let slot = m.push(t(2.0));
        assert_eq!(slot, 0);
        assert_eq!(m.len(), 2);
        assert_eq!(m.data[0].r, 2.0);
    }

    #[test]
    fn underfull_sample_errors() {
        let mut m = PrioritizedReplay::new(8, 0.6);
        m.push(t(0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            m.sample(4, 0.4, &mut rng),
            Err(RlError::UnderfullMemory { size: 1, batch: 4 })
        ));
    }

    #[test]
    fn uniform_priorities_with_full_beta_give_unit_weights() {
        let mut m = PrioritizedReplay::new(16, 0.6);
        for i in 0..10 {
            m.push(t(i as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = m.sample(8, 1.0, &mut rng).unwrap();
        assert!(s.weights.iter().all(|w| (w - 1.0).abs() < 1e-12));
    }

    #[test]
    fn find_walks_prefix_sums() {
        let mut s = SumTree::new(4);
        for (i, v) in [1.0, 2.0, 3.0, 4.0].into_iter().enumerate() {
            s.set(i, v);
        }
        assert_eq!(s.total(), 10.0);
        assert_eq!(s.find(0.5), 0);
        assert_eq!(s.find(1.0), 1);
        assert_eq!(s.find(5.9), 2);
        assert_eq!(s.find(9.99), 3);
    }
}
