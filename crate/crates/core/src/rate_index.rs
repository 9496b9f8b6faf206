//! Dynamic cumulative-weight index over sites: point updates and
//! proportional sampling in `O(log L)` on a Fenwick tree.

use rand::Rng;

/// Updates between full rebuilds of the tree from the stored leaf weights.
pub const DEFAULT_RESYNC_INTERVAL: u64 = 1 << 16;

#[derive(Debug, Clone)]
pub struct RateIndex {
    weights: Vec<f64>,
    // 1-based Fenwick array, tree[0] unused
    tree: Vec<f64>,
    top_bit: usize,
    updates: u64,
    resync_interval: u64,
}

impl RateIndex {
    pub fn new(weights: Vec<f64>) -> Self {
        Self::with_resync_interval(weights, DEFAULT_RESYNC_INTERVAL)
    }

    pub fn with_resync_interval(weights: Vec<f64>, resync_interval: u64) -> Self {
        assert!(
            weights.iter().all(|w| w.is_finite() && *w >= 0.0),
            "weights must be finite and non-negative"
        );
        let n = weights.len();
        let top_bit = if n == 0 { 0 } else { 1 << (usize::BITS - 1 - n.leading_zeros()) };
        let mut index = RateIndex {
            weights,
            tree: vec![0.0; n + 1],
            top_bit,
            updates: 0,
            resync_interval: resync_interval.max(1),
        };
        index.resync();
        index
    }

    /// Rebuilds the tree from the leaf weights in `O(L)`.
    pub fn resync(&mut self) {
        let n = self.weights.len();
        self.tree[1..].copy_from_slice(&self.weights);
        self.tree[0] = 0.0;
        for i in 1..=n {
            let parent = i + (i & i.wrapping_neg());
            if parent <= n {
                self.tree[parent] += self.tree[i];
            }
        }
        self.updates = 0;
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Sum of weights `0..=i`.
    pub fn prefix_sum(&self, i: usize) -> f64 {
        let mut idx = i + 1;
        let mut s = 0.0;
        while idx > 0 {
            s += self.tree[idx];
            idx &= idx - 1;
        }
        s
    }

    pub fn total(&self) -> f64 {
        if self.weights.is_empty() {
            0.0
        } else {
            self.prefix_sum(self.weights.len() - 1)
        }
    }

    pub fn set(&mut self, i: usize, w: f64) {
        debug_assert!(w.is_finite() && w >= 0.0);
        let delta = w - self.weights[i];
        self.weights[i] = w;
        if delta == 0.0 {
            return;
        }
        let n = self.weights.len();
        let mut idx = i + 1;
        while idx <= n {
            self.tree[idx] += delta;
            idx += idx & idx.wrapping_neg();
        }
        self.updates += 1;
        if self.updates >= self.resync_interval {
            self.resync();
        }
    }

    /// Smallest index whose inclusive prefix sum exceeds `u`, clamped to the
    /// last index.
    pub fn find(&self, mut u: f64) -> usize {
        let n = self.weights.len();
        let mut pos = 0;
        let mut step = self.top_bit;
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= u {
                pos = next;
                u -= self.tree[next];
            }
            step >>= 1;
        }
        pos.min(n - 1)
    }

    /// Draws an index with probability proportional to its weight.
    ///
    /// Returns `None` when the total weight is zero. Rounding in the tree can
    /// land on a zero-weight leaf; such draws are repeated after a resync.
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<usize> {
        for attempt in 0..4 {
            let total = self.total();
            if !(total > 0.0) {
                return None;
            }
            let i = self.find(rng.random::<f64>() * total);
            if self.weights[i] > 0.0 {
                return Some(i);
            }
            if attempt == 0 {
                self.resync();
            }
        }
        // Tree and leaves disagree badly; fall back to a linear scan.
        let total: f64 = self.weights.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        let mut u = rng.random::<f64>() * total;
        let mut last = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > 0.0 {
                last = i;
                if u < w {
                    return Some(i);
                }
                u -= w;
            }
        }
        Some(last)
    }

    /// Largest relative deviation between stored prefix totals and totals
    /// recomputed from the leaves.
    pub fn max_relative_drift(&self) -> f64 {
        let mut running = 0.0;
        let mut worst: f64 = 0.0;
        for (i, &w) in self.weights.iter().enumerate() {
            running += w;
            let stored = self.prefix_sum(i);
            let scale = running.abs().max(f64::MIN_POSITIVE);
            worst = worst.max((stored - running).abs() / scale);
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn prefix_sums_and_updates() {
        let mut idx = RateIndex::new(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(idx.total(), 15.0);
        assert_eq!(idx.prefix_sum(2), 6.0);
        idx.set(1, 0.0);
        assert_eq!(idx.total(), 13.0);
        assert_eq!(idx.find(0.5), 0);
        assert_eq!(idx.find(1.0), 2);
        assert_eq!(idx.find(12.9), 4);
    }

    #[test]
    fn sampling_is_proportional() {
        let w = vec![0.0, 1.0, 0.0, 3.0, 6.0];
        let mut idx = RateIndex::new(w.clone());
        let mut rng = rng_from_seed(1);
        let draws = 200_000;
        let mut counts = vec![0u32; w.len()];
        for _ in 0..draws {
            counts[idx.sample(&mut rng).unwrap()] += 1;
        }
        for (i, &wi) in w.iter().enumerate() {
            let p = wi / 10.0;
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            let phat = f64::from(counts[i]) / draws as f64;
            assert!((phat - p).abs() <= 4.0 * se + 1e-12, "site {i}: {phat} vs {p}");
        }
    }

    #[test]
    fn zero_total_samples_nothing() {
        let mut idx = RateIndex::new(vec![0.0, 0.0]);
        assert!(idx.sample(&mut rng_from_seed(0)).is_none());
    }

    #[test]
    fn drift_stays_small_under_churn() {
        let mut rng = rng_from_seed(9);
        let n = 1000;
        let mut idx = RateIndex::with_resync_interval(vec![1.0; n], 50_000);
        for _ in 0..200_000 {
            let i = rng.random_range(0..n);
            idx.set(i, rng.random::<f64>() * 100.0 + 1.0 / 3.0);
        }
        assert!(idx.max_relative_drift() < 1e-9);
        idx.resync();
        assert!(idx.max_relative_drift() < 1e-12);
    }

    #[test]
    fn non_power_of_two_lengths() {
        for n in 1..40 {
            let w: Vec<f64> = (0..n).map(|i| (i % 3) as f64).collect();
            let idx = RateIndex::new(w.clone());
            let mut acc = 0.0;
            for (i, wi) in w.iter().enumerate() {
                acc += wi;
                assert!((idx.prefix_sum(i) - acc).abs() < 1e-12);
            }
        }
    }
}
