//! Uncovered parts of a line, as a sorted list of disjoint intervals.

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Sorted endpoints `[a0 b0 a1 b1 ...]` of disjoint intervals `a_j < b_j < a_{j+1}`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SegmentList {
    ends: Vec<f64>,
    // cumulative lengths, rebuilt on demand by `sample`
    prefix: Vec<f64>,
}

impl SegmentList {
    pub fn new(lo: f64, hi: f64) -> Self {
        let mut s = Self::default();
        s.reset(lo, hi);
        s
    }

    /// Build from raw endpoints; they must be strictly increasing and even in number.
    pub fn from_endpoints(ends: Vec<f64>) -> Result<Self> {
        if ends.len() % 2 != 0 || ends.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidConfig(format!(
                "segment endpoints must be strictly increasing pairs: {ends:?}"
            )));
        }
        Ok(Self {
            ends,
            prefix: Vec::new(),
        })
    }

    /// Reset to the single segment `[lo, hi]`, keeping allocations.
    pub fn reset(&mut self, lo: f64, hi: f64) {
        self.ends.clear();
        if lo < hi {
            self.ends.push(lo);
            self.ends.push(hi);
        }
    }

    pub fn endpoints(&self) -> &[f64] {
        &self.ends
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }

    pub fn segment_count(&self) -> usize {
        self.ends.len() / 2
    }

    pub fn total_length(&self) -> f64 {
        self.ends.chunks_exact(2).map(|s| s[1] - s[0]).sum()
    }

    /// Whether `x` lies strictly inside one of the segments.
    pub fn contains(&self, x: f64) -> bool {
        let pos = self.ends.partition_point(|&e| e < x);
        pos % 2 == 1 && x < self.ends[pos]
    }

    /// Remove the interval `[lo, hi]`.
    ///
    /// Binary search locates both ends. Endpoints inside `[lo, hi]` are
    /// dropped; an end inside a segment becomes a new endpoint, so a
    /// segment containing the whole interval splits in two.
    pub fn subtract(&mut self, lo: f64, hi: f64) {
        if !(lo < hi) || self.ends.is_empty() {
            return;
        }
        if hi <= self.ends[0] || lo >= self.ends[self.ends.len() - 1] {
            return;
        }
        let i = self.ends.partition_point(|&e| e < lo);
        let j = self.ends.partition_point(|&e| e <= hi);
        match (i % 2 == 1, j % 2 == 1) {
            (true, true) => {
                self.ends.splice(i..j, [lo, hi]);
            }
            (true, false) => {
                self.ends.splice(i..j, [lo]);
            }
            (false, true) => {
                self.ends.splice(i..j, [hi]);
            }
            (false, false) => {
                self.ends.drain(i..j);
            }
        }
    }

    /// Uniform point on the union of the segments.
    pub fn sample(&mut self, rng: &mut RngStream) -> Result<f64> {
        if self.ends.is_empty() {
            return Err(Error::EmptyVoid);
        }
        self.prefix.clear();
        let mut acc = 0.0;
        for s in self.ends.chunks_exact(2) {
            acc += s[1] - s[0];
            self.prefix.push(acc);
        }
        let target = rng.uniform() * acc;
        let seg = self
            .prefix
            .partition_point(|&c| c <= target)
            .min(self.prefix.len() - 1);
        let before = if seg == 0 { 0.0 } else { self.prefix[seg - 1] };
        let (a, b) = (self.ends[2 * seg], self.ends[2 * seg + 1]);
        Ok((a + (target - before)).clamp(a, b))
    }

    /// Bytes held by the list's buffers.
    pub fn heap_bytes(&self) -> usize {
        (self.ends.capacity() + self.prefix.capacity()) * std::mem::size_of::<f64>()
    }
}

/// Free-function form of [`SegmentList::subtract`].
pub fn subtract_interval(g: &SegmentList, interval: (f64, f64)) -> SegmentList {
    let mut out = g.clone();
    out.subtract(interval.0, interval.1);
    out
}

/// Free-function form of [`SegmentList::sample`].
pub fn sample_from_segments(g: &mut SegmentList, rng: &mut RngStream) -> Result<f64> {
    g.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::chi_square_pvalue;
    use proptest::prelude::*;

    fn list(v: &[f64]) -> SegmentList {
        SegmentList::from_endpoints(v.to_vec()).unwrap()
    }

    #[test]
    fn split_inside() {
        let g = subtract_interval(&list(&[0.0, 1.0]), (0.4, 0.6));
        assert_eq!(g.endpoints(), &[0.0, 0.4, 0.6, 1.0]);
    }

    #[test]
    fn miss_leaves_unchanged() {
        let g = subtract_interval(&list(&[0.0, 1.0]), (-0.5, -0.1));
        assert_eq!(g.endpoints(), &[0.0, 1.0]);
        let g = subtract_interval(&list(&[0.0, 0.3, 0.5, 1.0]), (0.35, 0.45));
        assert_eq!(g.endpoints(), &[0.0, 0.3, 0.5, 1.0]);
    }

    #[test]
    fn trim_two_segments() {
        let g = subtract_interval(&list(&[0.0, 0.3, 0.5, 1.0]), (0.2, 0.7));
        assert_eq!(g.endpoints(), &[0.0, 0.2, 0.7, 1.0]);
    }

    #[test]
    fn cover_everything() {
        let g = subtract_interval(&list(&[0.0, 0.3, 0.5, 1.0]), (-1.0, 2.0));
        assert!(g.is_empty());
        assert_eq!(subtract_interval(&g, (0.1, 0.2)), g);
    }

    #[test]
    fn trim_one_side() {
        let g = subtract_interval(&list(&[0.0, 1.0]), (-0.2, 0.25));
        assert_eq!(g.endpoints(), &[0.25, 1.0]);
        let g = subtract_interval(&list(&[0.0, 1.0]), (0.75, 1.5));
        assert_eq!(g.endpoints(), &[0.0, 0.75]);
    }

    #[test]
    fn touching_endpoints_stay_strict() {
        let g = subtract_interval(&list(&[0.0, 0.3, 0.5, 1.0]), (0.3, 0.5));
        assert_eq!(g.endpoints(), &[0.0, 0.3, 0.5, 1.0]);
        let g = subtract_interval(&list(&[0.0, 0.3, 0.5, 1.0]), (0.0, 0.3));
        assert_eq!(g.endpoints(), &[0.5, 1.0]);
    }

    #[test]
    fn sample_empty_is_error() {
        let mut g = SegmentList::default();
        let mut rng = RngStream::new(0, 0);
        assert_eq!(g.sample(&mut rng), Err(Error::EmptyVoid));
    }

    #[test]
    fn sample_single_segment_contained() {
        let mut g = list(&[0.0, 0.2]);
        let mut rng = RngStream::new(1, 0);
        for _ in 0..10_000 {
            let x = g.sample(&mut rng).unwrap();
            assert!((0.0..=0.2).contains(&x));
        }
    }

    #[test]
    fn sample_splits_evenly() {
        let mut g = list(&[0.0, 0.1, 0.9, 1.0]);
        let mut rng = RngStream::new(2, 0);
        let mut counts = [0u64; 2];
        for _ in 0..100_000 {
            let x = g.sample(&mut rng).unwrap();
            assert!(g.contains(x) || x == 0.0 || x == 0.9);
            counts[usize::from(x >= 0.5)] += 1;
        }
        assert!(chi_square_pvalue(&counts, &[50_000.0, 50_000.0]) > 0.01);
    }

    proptest! {
        #[test]
        fn subtraction_keeps_invariants(ops in prop::collection::vec((0.0f64..1.0, 0.0f64..0.3), 0..40)) {
            let mut g = SegmentList::new(0.0, 1.0);
            for (c, w) in ops {
                g.subtract(c - w, c + w);
                let e = g.endpoints();
                prop_assert!(e.len() % 2 == 0);
                prop_assert!(e.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(e.iter().all(|x| (0.0..=1.0).contains(x)));
            }
        }
    }
}
