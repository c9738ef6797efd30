use std::collections::VecDeque;

use rand::Rng;

use super::{PriorityMode, Transition};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplingMode {
    /// The `k` highest priorities, ties by insertion order.
    TopK,
    /// `k` draws without replacement from the softmax of the priorities.
    Stochastic,
}

/// FIFO ring of transitions with priorities.
#[derive(Clone, Debug)]
pub struct PriorityReplayBuffer {
    capacity: usize,
    mode: PriorityMode,
    sampling: SamplingMode,
    items: VecDeque<(u64, Transition)>,
    next_seq: u64,
}

impl PriorityReplayBuffer {
    pub fn new(capacity: usize, mode: PriorityMode, sampling: SamplingMode) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        PriorityReplayBuffer {
            capacity,
            mode,
            sampling,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            next_seq: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn mode(&self) -> PriorityMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends, evicting the oldest transition at capacity. Non-finite or
    /// negative priorities are clamped to zero.
    pub fn push(&mut self, mut t: Transition) {
        if !(t.priority.is_finite() && t.priority >= 0.0) {
            t.priority = 0.0;
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back((self.next_seq, t));
        self.next_seq += 1;
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i].1
    }

    pub fn set_priority(&mut self, i: usize, p: f64) {
        self.items[i].1.priority = if p.is_finite() && p >= 0.0 { p } else { 0.0 };
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter().map(|(_, t)| t)
    }

    /// Softmax of the stored priorities, in buffer order.
    pub fn probabilities(&self) -> Vec<f64> {
        let max = self.iter().map(|t| t.priority).fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = self.iter().map(|t| (t.priority - max).exp()).collect();
        let z: f64 = e.iter().sum();
        e.into_iter().map(|v| v / z).collect()
    }

    /// Buffer positions of a batch of up to `k` transitions.
    pub fn sample_indices<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<usize> {
        if k >= self.len() {
            return (0..self.len()).collect();
        }
        match self.sampling {
            SamplingMode::TopK => {
                let mut order: Vec<usize> = (0..self.len()).collect();
                order.sort_by(|&a, &b| {
                    let (sa, ta) = &self.items[a];
                    let (sb, tb) = &self.items[b];
                    tb.priority.total_cmp(&ta.priority).then(sa.cmp(sb))
                });
                order.truncate(k);
                order
            }
            SamplingMode::Stochastic => {
                let mut weights = self.probabilities();
                let mut out = Vec::with_capacity(k);
                for _ in 0..k {
                    let total: f64 = weights.iter().sum();
                    let mut u = rng.gen::<f64>() * total;
                    let mut pick = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
                    for (i, &w) in weights.iter().enumerate() {
                        if w > 0.0 && u < w {
                            pick = i;
                            break;
                        }
                        u -= w;
                    }
                    weights[pick] = 0.0;
                    out.push(pick);
                }
                out
            }
        }
    }

    pub fn sample_batch<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<&Transition> {
        self.sample_indices(k, rng).into_iter().map(|i| self.get(i)).collect()
    }
}
