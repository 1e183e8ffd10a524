//! Static balanced k-d tree over a point cloud, with an unindexed tail of
//! recently inserted points that is scanned linearly until the next rebuild.

use std::ops::ControlFlow;

use super::PointCloud;

#[derive(Debug, Clone, Default)]
pub struct KdTree {
    // implicit tree: the median of idx[lo..hi] sits at (lo+hi)/2
    idx: Vec<u32>,
    dim: usize,
    // points inserted since the last rebuild
    pending: Vec<u32>,
}

#[inline]
fn sq(x: f64) -> f64 {
    x * x
}

impl KdTree {
    pub fn build(cloud: &PointCloud) -> Self {
        let mut t = Self {
            idx: Vec::new(),
            dim: cloud.dim(),
            pending: Vec::new(),
        };
        t.rebuild(cloud);
        t
    }

    pub fn rebuild(&mut self, cloud: &PointCloud) {
        self.dim = cloud.dim();
        self.idx.clear();
        self.idx.extend(0..cloud.len() as u32);
        self.pending.clear();
        let n = self.idx.len();
        build_range(&mut self.idx, cloud, 0, n, 0);
    }

    /// Record point `i` (already pushed to the cloud). Rebuilds once the
    /// unindexed tail reaches a quarter of the indexed points.
    pub fn insert(&mut self, cloud: &PointCloud, i: usize) {
        self.pending.push(i as u32);
        if self.pending.len() >= self.idx.len().div_ceil(4).max(8) {
            self.rebuild(cloud);
        }
    }

    pub fn indexed_len(&self) -> usize {
        self.idx.len()
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn heap_bytes(&self) -> usize {
        (self.idx.capacity() + self.pending.capacity()) * std::mem::size_of::<u32>()
    }

    /// Visit every point whose distance to the axis-parallel line through
    /// `anchor` along `axis` is below `r`. Stops early on `Break`.
    pub fn for_each_near_line<F>(
        &self,
        cloud: &PointCloud,
        anchor: &[f64],
        axis: usize,
        r: f64,
        mut visit: F,
    ) -> ControlFlow<()>
    where
        F: FnMut(usize) -> ControlFlow<()>,
    {
        let r2 = r * r;
        let line_dist2 = |p: &[f64]| -> f64 {
            p.iter()
                .zip(anchor)
                .enumerate()
                .filter(|(i, _)| *i != axis)
                .map(|(_, (a, b))| sq(a - b))
                .sum()
        };
        let mut stack: Vec<(usize, usize, usize)> = Vec::with_capacity(64);
        if !self.idx.is_empty() {
            stack.push((0, self.idx.len(), 0));
        }
        while let Some((lo, hi, depth)) = stack.pop() {
            let mid = (lo + hi) / 2;
            let id = self.idx[mid] as usize;
            let p = cloud.point(id);
            if line_dist2(p) < r2 {
                visit(id)?;
            }
            let split = depth % self.dim;
            let children = [(lo, mid), (mid + 1, hi)];
            if split == axis {
                for (a, b) in children {
                    if a < b {
                        stack.push((a, b, depth + 1));
                    }
                }
            } else {
                let diff = anchor[split] - p[split];
                let (near, far) = if diff < 0.0 {
                    (children[0], children[1])
                } else {
                    (children[1], children[0])
                };
                if far.0 < far.1 && diff.abs() < r {
                    stack.push((far.0, far.1, depth + 1));
                }
                if near.0 < near.1 {
                    stack.push((near.0, near.1, depth + 1));
                }
            }
        }
        for &id in &self.pending {
            if line_dist2(cloud.point(id as usize)) < r2 {
                visit(id as usize)?;
            }
        }
        ControlFlow::Continue(())
    }

    /// Whether any point lies strictly within distance `r` of `q`.
    pub fn any_within(&self, cloud: &PointCloud, q: &[f64], r: f64) -> bool {
        let r2 = r * r;
        if self
            .pending
            .iter()
            .any(|&id| dist2(cloud.point(id as usize), q) < r2)
        {
            return true;
        }
        let mut stack: Vec<(usize, usize, usize)> = Vec::with_capacity(64);
        if !self.idx.is_empty() {
            stack.push((0, self.idx.len(), 0));
        }
        while let Some((lo, hi, depth)) = stack.pop() {
            let mid = (lo + hi) / 2;
            let p = cloud.point(self.idx[mid] as usize);
            if dist2(p, q) < r2 {
                return true;
            }
            let split = depth % self.dim;
            let diff = q[split] - p[split];
            let (near, far) = if diff < 0.0 {
                ((lo, mid), (mid + 1, hi))
            } else {
                ((mid + 1, hi), (lo, mid))
            };
            if far.0 < far.1 && diff.abs() < r {
                stack.push((far.0, far.1, depth + 1));
            }
            if near.0 < near.1 {
                stack.push((near.0, near.1, depth + 1));
            }
        }
        false
    }

    /// Nearest point to `q` other than `exclude`, with its squared distance.
    pub fn nearest(
        &self,
        cloud: &PointCloud,
        q: &[f64],
        exclude: Option<usize>,
    ) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let consider = |id: usize, best: &mut Option<(usize, f64)>| {
            if Some(id) == exclude {
                return;
            }
            let d2 = dist2(cloud.point(id), q);
            if best.map_or(true, |(_, b)| d2 < b) {
                *best = Some((id, d2));
            }
        };
        for &id in &self.pending {
            consider(id as usize, &mut best);
        }
        self.nearest_rec(cloud, q, 0, self.idx.len(), 0, &mut |id, b| consider(id, b), &mut best);
        best
    }

    #[allow(clippy::too_many_arguments)]
    fn nearest_rec(
        &self,
        cloud: &PointCloud,
        q: &[f64],
        lo: usize,
        hi: usize,
        depth: usize,
        consider: &mut dyn FnMut(usize, &mut Option<(usize, f64)>),
        best: &mut Option<(usize, f64)>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let id = self.idx[mid] as usize;
        consider(id, best);
        let p = cloud.point(id);
        let split = depth % self.dim;
        let diff = q[split] - p[split];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.nearest_rec(cloud, q, near.0, near.1, depth + 1, consider, best);
        if best.map_or(true, |(_, b)| sq(diff) < b) {
            self.nearest_rec(cloud, q, far.0, far.1, depth + 1, consider, best);
        }
    }
}

#[inline]
pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| sq(x - y)).sum()
}

fn build_range(idx: &mut [u32], cloud: &PointCloud, lo: usize, hi: usize, depth: usize) {
    if hi - lo <= 1 {
        return;
    }
    let split = depth % cloud.dim();
    let mid = (lo + hi) / 2;
    idx[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
        cloud.point(a as usize)[split].total_cmp(&cloud.point(b as usize)[split])
    });
    build_range(idx, cloud, lo, mid, depth + 1);
    build_range(idx, cloud, mid + 1, hi, depth + 1);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn random_cloud(d: usize, n: usize, seed: u64) -> PointCloud {
        let mut rng = RngStream::new(seed, 0);
        let mut c = PointCloud::new(d, 0.01);
        for _ in 0..n {
            let p: Vec<f64> = (0..d).map(|_| rng.uniform()).collect();
            c.push(&p);
        }
        c
    }

    #[test]
    fn line_query_matches_scan() {
        for d in [2, 3, 5] {
            let cloud = random_cloud(d, 500, d as u64);
            let mut tree = KdTree::build(&cloud);
            // put a few into the pending tail too
            let mut cloud2 = cloud.clone();
            let extra = random_cloud(d, 20, 99);
            for i in 0..extra.len() {
                cloud2.push(extra.point(i));
                tree.pending.push((cloud2.len() - 1) as u32);
            }
            let mut rng = RngStream::new(5, 0);
            for _ in 0..200 {
                let anchor: Vec<f64> = (0..d).map(|_| rng.uniform()).collect();
                let axis = rng.below(d);
                let r = 0.15;
                let mut got = Vec::new();
                let _ = tree.for_each_near_line(&cloud2, &anchor, axis, r, |i| {
                    got.push(i);
                    ControlFlow::Continue(())
                });
                got.sort();
                let want: Vec<usize> = (0..cloud2.len())
                    .filter(|&i| {
                        let p = cloud2.point(i);
                        (0..d)
                            .filter(|&j| j != axis)
                            .map(|j| sq(p[j] - anchor[j]))
                            .sum::<f64>()
                            < r * r
                    })
                    .collect();
                assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn nearest_matches_scan() {
        let cloud = random_cloud(4, 300, 1);
        let tree = KdTree::build(&cloud);
        let mut rng = RngStream::new(2, 0);
        for _ in 0..200 {
            let q: Vec<f64> = (0..4).map(|_| rng.uniform()).collect();
            let (_, d2) = tree.nearest(&cloud, &q, None).unwrap();
            let want = (0..cloud.len())
                .map(|i| dist2(cloud.point(i), &q))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(d2, want);
            let r = want.sqrt();
            assert!(tree.any_within(&cloud, &q, r * 1.0001));
            assert!(!tree.any_within(&cloud, &q, r * 0.9999));
        }
        let (j, _) = tree.nearest(&cloud, cloud.point(7), Some(7)).unwrap();
        assert_ne!(j, 7);
    }
}
