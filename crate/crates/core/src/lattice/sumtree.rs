/// Binary prefix-sum tree over non-negative weights.
///
/// Leaves live at `[capacity, 2 * capacity)`; every internal node holds the
/// sum of its two children, so point updates and weighted selection are
/// `O(log capacity)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SumTree {
    capacity: usize,
    len: usize,
    storage: Vec<f64>,
}

impl SumTree {
    pub fn from_weights(weights: &[f64]) -> Self {
        let len = weights.len();
        let capacity = len.max(1).next_power_of_two();
        let mut storage = vec![0.0; 2 * capacity];
        storage[capacity..capacity + len].copy_from_slice(weights);
        let mut tree = SumTree { capacity, len, storage };
        tree.rebuild_internal();
        tree
    }

    fn rebuild_internal(&mut self) {
        for i in (1..self.capacity).rev() {
            self.storage[i] = self.storage[2 * i] + self.storage[2 * i + 1];
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.storage[1]
    }

    #[inline]
    pub fn leaf(&self, index: usize) -> f64 {
        self.storage[self.capacity + index]
    }

    pub fn leaves(&self) -> &[f64] {
        &self.storage[self.capacity..self.capacity + self.len]
    }

    pub fn update(&mut self, index: usize, weight: f64) {
        assert!(index < self.len, "leaf {index} out of bounds");
        debug_assert!(weight >= 0.0);
        let mut i = index + self.capacity;
        self.storage[i] = weight;
        while i > 1 {
            i /= 2;
            self.storage[i] = self.storage[2 * i] + self.storage[2 * i + 1];
        }
    }

    /// Leaf `i` with `prefix(i) <= target < prefix(i + 1)`, where `target`
    /// is in `[0, total)`. Rounding can land on a zero-weight leaf at a
    /// boundary; the caller treats `None` as a rejected draw.
    pub fn find(&self, mut target: f64) -> Option<usize> {
        let mut i = 1;
        while i < self.capacity {
            let left = self.storage[2 * i];
            if target < left {
                i *= 2;
            } else {
                target -= left;
                i = 2 * i + 1;
            }
        }
        let index = i - self.capacity;
        (index < self.len && self.storage[i] > 0.0).then_some(index)
    }

    /// Largest absolute difference between this tree and one rebuilt from
    /// its own leaves.
    pub fn audit(&self) -> f64 {
        let fresh = SumTree::from_weights(self.leaves());
        self.storage
            .iter()
            .zip(fresh.storage.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
