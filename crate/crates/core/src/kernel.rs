//! Dot-product kernel and bounded top-k selection shared by every retrieval path.

use std::cmp::Ordering;

/// Dot product with a fixed four-lane reduction order.
///
/// Every score in the crate goes through this function, so two routes that
/// evaluate the same pair of vectors always agree bit for bit.
#[inline(always)]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let chunks = a.len() / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..chunks {
        let j = i * 4;
        s0 += a[j] * b[j];
        s1 += a[j + 1] * b[j + 1];
        s2 += a[j + 2] * b[j + 2];
        s3 += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in chunks * 4..a.len() {
        tail += a[j] * b[j];
    }
    (s0 + s1) + (s2 + s3) + tail
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A scored entry. `Ord` ranks by score descending, then by `key` ascending:
/// `a > b` means `a` is the better entry.
#[derive(Debug, Clone, Copy)]
pub struct Ranked {
    pub score: f64,
    pub key: u64,
    pub row: usize,
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.key.cmp(&self.key))
    }
}

/// Keeps the best `k` entries pushed so far.
///
/// Accepted entries go to a buffer of up to `2k`; when it fills, a linear
/// selection keeps the best `k` and raises the rejection floor. Pushes cost
/// O(1) amortized.
pub struct TopK {
    k: usize,
    buf: Vec<Ranked>,
    // score of the k-th best entry after the last compaction, -inf before
    floor: f64,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            buf: Vec::with_capacity(k.saturating_mul(2).min(1 << 16)),
            floor: f64::NEG_INFINITY,
        }
    }

    /// Entries scoring below this are rejected by [`TopK::push`].
    #[inline]
    pub fn floor(&self) -> f64 {
        self.floor
    }

    #[inline]
    pub fn push(&mut self, entry: Ranked) {
        if entry.score < self.floor || self.k == 0 {
            return;
        }
        self.buf.push(entry);
        if self.buf.len() >= self.k.saturating_mul(2).max(self.k + 1) {
            self.compact();
        }
    }

    fn compact(&mut self) {
        let k = self.k;
        self.buf.select_nth_unstable_by(k - 1, |a, b| b.cmp(a));
        self.buf.truncate(k);
        self.floor = self.buf[k - 1].score;
    }

    pub fn len(&self) -> usize {
        self.buf.len().min(self.k)
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    /// Best first.
    pub fn into_sorted(mut self) -> Vec<Ranked> {
        self.buf.sort_unstable_by(|a, b| b.cmp(a));
        self.buf.truncate(self.k);
        self.buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn dot_matches_naive_for_all_tail_lengths() {
        for len in 0..13 {
            let a: Vec<f64> = (0..len).map(|i| i as f64 * 0.5 - 1.0).collect();
            let b: Vec<f64> = (0..len).map(|i| 2.0 - i as f64 * 0.25).collect();
            assert!((dot(&a, &b) - naive_dot(&a, &b)).abs() < 1e-12, "len {len}");
        }
    }

    #[test]
    fn ranked_orders_by_score_then_ascending_key() {
        let a = Ranked { score: 1.0, key: 5, row: 0 };
        let b = Ranked { score: 1.0, key: 2, row: 1 };
        let c = Ranked { score: 2.0, key: 9, row: 2 };
        assert!(b > a);
        assert!(c > b);
    }

    #[test]
    fn topk_keeps_best_and_breaks_ties_by_key() {
        let mut top = TopK::new(2);
        for (i, s) in [0.5, 0.8, 0.8, 0.2].iter().enumerate() {
            top.push(Ranked { score: *s, key: i as u64, row: i });
        }
        let keys: Vec<u64> = top.into_sorted().iter().map(|r| r.key).collect();
        assert_eq!(keys, vec![1, 2]);
    }

    #[test]
    fn topk_matches_full_sort_across_compactions() {
        for k in [1, 3, 10] {
            let entries: Vec<Ranked> = (0..200u64)
                .map(|i| Ranked { score: ((i * 37) % 23) as f64, key: (i * 11) % 200, row: i as usize })
                .collect();
            let mut top = TopK::new(k);
            for e in &entries {
                top.push(*e);
            }
            let mut want = entries.clone();
            want.sort_by(|a, b| b.cmp(a));
            let got: Vec<u64> = top.into_sorted().iter().map(|r| r.key).collect();
            let want: Vec<u64> = want[..k].iter().map(|r| r.key).collect();
            assert_eq!(got, want, "k={k}");
        }
    }

    #[test]
    fn topk_zero_capacity_is_empty() {
        let mut top = TopK::new(0);
        top.push(Ranked { score: 1.0, key: 0, row: 0 });
        assert!(top.is_empty());
    }
}
