/// Binary indexed tree over nonnegative weights with cumulative search.
#[derive(Debug, Clone)]
pub struct Fenwick {
    tree: Vec<f64>,
}

impl Fenwick {
    pub fn from_values(values: &[f64]) -> Self {
        let mut f = Self {
            tree: vec![0.0; values.len() + 1],
        };
        f.rebuild(values);
        f
    }

    pub fn len(&self) -> usize {
        self.tree.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear-time reconstruction from the underlying weights.
    pub fn rebuild(&mut self, values: &[f64]) {
        let n = values.len();
        self.tree.clear();
        self.tree.push(0.0);
        self.tree.extend_from_slice(values);
        for i in 1..=n {
            let parent = i + (i & i.wrapping_neg());
            if parent <= n {
                let v = self.tree[i];
                self.tree[parent] += v;
            }
        }
    }

    pub fn add(&mut self, index: usize, delta: f64) {
        let mut i = index + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum of the weights with index `< end`.
    pub fn prefix(&self, end: usize) -> f64 {
        let mut i = end;
        let mut s = 0.0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }

    pub fn total(&self) -> f64 {
        self.prefix(self.len())
    }

    /// Index `i` with `prefix(i) <= target < prefix(i + 1)`, clamped to the
    /// last index when rounding pushes `target` past the total.
    pub fn find(&self, target: f64) -> usize {
        let n = self.len();
        let mut pos = 0;
        let mut rem = target;
        let mut step = n.checked_next_power_of_two().unwrap_or(0);
        if step > n {
            step >>= 1;
        }
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= rem {
                pos = next;
                rem -= self.tree[next];
            }
            step >>= 1;
        }
        pos.min(n.saturating_sub(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn skips_zero_weights() {
        let f = Fenwick::from_values(&[0.0, 2.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(f.total(), 3.0);
        assert_eq!(f.find(0.0), 1);
        assert_eq!(f.find(1.999), 1);
        assert_eq!(f.find(2.0), 4);
        assert_eq!(f.find(2.5), 4);
        assert_eq!(f.find(10.0), 5);
    }

    proptest! {
        #[test]
        fn matches_linear_scan(weights in proptest::collection::vec(0.0f64..5.0, 1..64), frac in 0.0f64..1.0, updates in proptest::collection::vec((0usize..64, 0.0f64..5.0), 0..16)) {
            let mut w = weights.clone();
            let mut f = Fenwick::from_values(&w);
            for (i, v) in updates {
                let i = i % w.len();
                f.add(i, v - w[i]);
                w[i] = v;
            }
            let total: f64 = w.iter().sum();
            prop_assert!((f.total() - total).abs() < 1e-9);
            for end in 0..=w.len() {
                prop_assert!((f.prefix(end) - w[..end].iter().sum::<f64>()).abs() < 1e-9);
            }
            if total > 0.0 {
                let target = frac * total;
                let idx = f.find(target);
                let before: f64 = w[..idx].iter().sum();
                prop_assert!(before <= target + 1e-9);
                prop_assert!(target < before + w[idx] + 1e-9);
            }
        }
    }
}
