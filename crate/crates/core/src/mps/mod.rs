//! Relaxed maximal Poisson-disk sampling with line darts.
//!
//! Each line dart picks a random anchor in the unit box and tries the `d`
//! axis-parallel lines through it in a random order. For every line the
//! uncovered part `g = line \ disks` is built from the disks the k-d tree
//! reports near the line; the first non-empty `g` yields a new sample drawn
//! uniformly from it. A dart whose `d` lines are fully covered is a miss, and
//! the run stops after `m` consecutive misses, where `m` comes from a
//! worst-case (cubical) void of the requested volume fraction.
//!
//! Memory grows only through the point cloud, the k-d tree index and the one
//! segment list that is reused for every line.

mod kdtree;
mod segments;

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::ops::ControlFlow;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flat::binomial;
use crate::rng::RngStream;

pub use kdtree::KdTree;
pub use segments::{sample_from_segments, subtract_interval, SegmentList};

/// Kind of dart thrown by the sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DartMode {
    Point,
    Line,
}

impl DartMode {
    pub fn flat_dim(self) -> usize {
        match self {
            DartMode::Point => 0,
            DartMode::Line => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpsConfig {
    pub d: usize,
    /// Disk radius, the minimum distance between samples.
    pub r_f: f64,
    /// Acceptable uncovered volume fraction.
    pub void_fraction: f64,
    pub dart: DartMode,
    pub max_darts: Option<u64>,
    pub time_budget: Option<Duration>,
}

impl MpsConfig {
    pub fn new(d: usize, r_f: f64, void_fraction: f64, dart: DartMode) -> Self {
        Self {
            d,
            r_f,
            void_fraction,
            dart,
            max_darts: None,
            time_budget: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidConfig("d must be at least 1".into()));
        }
        if !(self.r_f > 0.0 && self.r_f < 1.0) {
            return Err(Error::InvalidConfig(format!("r_f must lie in (0,1), got {}", self.r_f)));
        }
        if !(self.void_fraction > 0.0 && self.void_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "void fraction must lie in (0,1), got {}",
                self.void_fraction
            )));
        }
        Ok(())
    }
}

/// Samples in `[0,1]^d`, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    d: usize,
    r_f: f64,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(d: usize, r_f: f64) -> Self {
        Self {
            d,
            r_f,
            coords: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn r_f(&self) -> f64 {
        self.r_f
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.d)
    }

    pub fn push(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.d);
        self.coords.extend_from_slice(p);
    }

    pub fn heap_bytes(&self) -> usize {
        self.coords.capacity() * std::mem::size_of::<f64>()
    }

    /// Smallest pairwise distance by exhaustive comparison.
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                best = best.min(kdtree::dist2(self.point(i), self.point(j)));
            }
        }
        best.sqrt()
    }

    /// Text form: header `d n r_f`, then one point per line, 17 significant digits.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", self.d, self.len(), fmt17(self.r_f))?;
        let mut line = String::new();
        for p in self.points() {
            line.clear();
            for (i, x) in p.iter().enumerate() {
                if i > 0 {
                    line.push(' ');
                }
                let _ = write!(line, "{}", fmt17(*x));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let bad = |msg: String| Error::InvalidConfig(format!("malformed point cloud: {msg}"));
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| bad("missing header".into()))?
            .map_err(|e| bad(e.to_string()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(bad(format!("header `{header}`")));
        }
        let d: usize = fields[0].parse().map_err(|_| bad("d".into()))?;
        let n: usize = fields[1].parse().map_err(|_| bad("n".into()))?;
        let r_f: f64 = fields[2].parse().map_err(|_| bad("r_f".into()))?;
        if d == 0 {
            return Err(bad("d = 0".into()));
        }
        let mut cloud = PointCloud::new(d, r_f);
        for line in lines {
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let p = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(e.to_string()))?;
            if p.len() != d {
                return Err(bad(format!("expected {d} coordinates, got {}", p.len())));
            }
            cloud.push(&p);
        }
        if cloud.len() != n {
            return Err(bad(format!("header says {n} points, found {}", cloud.len())));
        }
        Ok(cloud)
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MpsStats {
    pub hits: u64,
    pub misses: u64,
    pub consecutive_misses: u64,
    pub darts: u64,
    pub required_misses: u64,
    /// `(seconds since start, points)` at geometrically spaced point counts.
    pub inserted_over_time: Vec<(f64, usize)>,
    pub peak_memory_estimate: usize,
    pub elapsed_s: f64,
}

/// Analytic working-set size in bytes for `n` points in `d` dimensions:
/// `nd` cloud coordinates, `2n + d` floats of segment scratch and one
/// 32-bit index per point in the k-d tree.
pub fn memory_estimate(n: usize, d: usize) -> usize {
    8 * (n * d + 2 * n + d) + 4 * n
}

/// Interval of the axis-parallel line through `anchor` (coordinate `axis`
/// free) covered by the open ball of radius `r` around `center`.
pub fn line_disk_interval(
    axis: usize,
    anchor: &[f64],
    center: &[f64],
    r: f64,
) -> Option<(f64, f64)> {
    let rho2: f64 = anchor
        .iter()
        .zip(center)
        .enumerate()
        .filter(|(i, _)| *i != axis)
        .map(|(_, (a, c))| (a - c) * (a - c))
        .sum();
    let r2 = r * r;
    if rho2 >= r2 {
        return None;
    }
    let h = (r2 - rho2).sqrt();
    Some((center[axis] - h, center[axis] + h))
}

/// Consecutive misses after which the remaining void is below `v`.
///
/// A `k`-flat hits a cubical void of volume `v` with probability
/// `p = v^((d-k)/d)`; a dart of `C(d,k)` flats hits with
/// `P = 1 - (1-p)^C(d,k)`, and `m = ceil(1/P)`. Point darts use `P = v`.
pub fn required_misses(v: f64, d: usize, k: usize) -> u64 {
    let p_dart = if k == 0 {
        v
    } else {
        let p = v.powf((d - k) as f64 / d as f64);
        let l = binomial(d, k).unwrap_or(usize::MAX) as f64;
        // 1 - (1-p)^l without cancellation
        -((l * (-p).ln_1p()).exp_m1())
    };
    // absorb rounding so that P = 1 - eps still gives one miss
    let m = (1.0 / p_dart - 1e-9).ceil();
    if m.is_finite() {
        (m as u64).max(1)
    } else {
        u64::MAX
    }
}

/// Outcome of a single dart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Throw {
    Hit(usize),
    Miss,
}

/// Sampler state: the cloud, its spatial index and one reusable segment list.
#[derive(Debug, Clone)]
pub struct MpsState {
    cloud: PointCloud,
    tree: KdTree,
    segments: SegmentList,
    anchor: Vec<f64>,
    axes: Vec<usize>,
}

/// Byte counts of every structure that can grow with the number of points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Footprint {
    pub cloud: usize,
    pub tree: usize,
    pub segments: usize,
}

impl Footprint {
    pub fn total(&self) -> usize {
        self.cloud + self.tree + self.segments
    }
}

impl MpsState {
    pub fn new(d: usize, r_f: f64) -> Self {
        let cloud = PointCloud::new(d, r_f);
        Self {
            tree: KdTree::build(&cloud),
            cloud,
            segments: SegmentList::default(),
            anchor: vec![0.0; d],
            axes: (0..d).collect(),
        }
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn tree(&self) -> &KdTree {
        &self.tree
    }

    pub fn into_cloud(self) -> PointCloud {
        self.cloud
    }

    pub fn footprint(&self) -> Footprint {
        Footprint {
            cloud: self.cloud.heap_bytes(),
            tree: self.tree.heap_bytes(),
            segments: self.segments.heap_bytes(),
        }
    }

    /// Current uncovered segments of the last line examined.
    pub fn segments(&self) -> &SegmentList {
        &self.segments
    }

    fn insert(&mut self, p: &[f64]) -> usize {
        self.cloud.push(p);
        let id = self.cloud.len() - 1;
        self.tree.insert(&self.cloud, id);
        id
    }

    /// Whether `p` is at least `r_f` away from every sample.
    pub fn is_free(&self, p: &[f64]) -> bool {
        !self.tree.any_within(&self.cloud, p, self.cloud.r_f())
    }

    /// Build the uncovered segments of the line through `anchor` along `axis`.
    pub fn line_segments(&mut self, anchor: &[f64], axis: usize) -> &SegmentList {
        let r = self.cloud.r_f();
        self.segments.reset(0.0, 1.0);
        let segs = &mut self.segments;
        let cloud = &self.cloud;
        let _ = self.tree.for_each_near_line(cloud, anchor, axis, r, |id| {
            if let Some((lo, hi)) = line_disk_interval(axis, anchor, cloud.point(id), r) {
                segs.subtract(lo, hi);
            }
            if segs.is_empty() {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        });
        &self.segments
    }

    /// Throw one line dart.
    pub fn throw_line_dart(&mut self, rng: &mut RngStream) -> Throw {
        let d = self.cloud.dim();
        let mut anchor = std::mem::take(&mut self.anchor);
        let mut axes = std::mem::take(&mut self.axes);
        for a in anchor.iter_mut() {
            *a = rng.uniform();
        }
        axes.shuffle(rng);
        let mut result = Throw::Miss;
        for &axis in &axes {
            self.line_segments(&anchor, axis);
            if self.segments.is_empty() {
                continue;
            }
            let x = self.segments.sample(rng).expect("non-empty segments");
            let saved = anchor[axis];
            anchor[axis] = x;
            // rounding at a tangent endpoint can land a hair inside a disk
            if self.is_free(&anchor) {
                result = Throw::Hit(self.insert(&anchor));
                break;
            }
            anchor[axis] = saved;
        }
        debug_assert_eq!(anchor.len(), d);
        self.anchor = anchor;
        self.axes = axes;
        result
    }

    /// Throw one point dart: accept a uniform point if it is outside every disk.
    pub fn throw_point_dart(&mut self, rng: &mut RngStream) -> Throw {
        let mut p = std::mem::take(&mut self.anchor);
        for a in p.iter_mut() {
            *a = rng.uniform();
        }
        let result = if self.is_free(&p) {
            Throw::Hit(self.insert(&p))
        } else {
            Throw::Miss
        };
        self.anchor = p;
        result
    }
}

/// Run the sampler until `m` consecutive misses, the dart cap or the time budget.
pub fn run_mps(cfg: &MpsConfig, rng: &mut RngStream) -> Result<(PointCloud, MpsStats)> {
    cfg.validate()?;
    let mut state = MpsState::new(cfg.d, cfg.r_f);
    let mut stats = MpsStats {
        required_misses: required_misses(cfg.void_fraction, cfg.d, cfg.dart.flat_dim()),
        ..MpsStats::default()
    };
    let start = Instant::now();
    let mut next_checkpoint = 1usize;
    while stats.consecutive_misses < stats.required_misses {
        if cfg.max_darts.is_some_and(|cap| stats.darts >= cap) {
            break;
        }
        if cfg.time_budget.is_some_and(|t| start.elapsed() >= t) {
            break;
        }
        let throw = match cfg.dart {
            DartMode::Line => state.throw_line_dart(rng),
            DartMode::Point => state.throw_point_dart(rng),
        };
        stats.darts += 1;
        match throw {
            Throw::Hit(_) => {
                stats.hits += 1;
                stats.consecutive_misses = 0;
                let n = state.cloud.len();
                if n >= next_checkpoint {
                    stats
                        .inserted_over_time
                        .push((start.elapsed().as_secs_f64(), n));
                    next_checkpoint = (next_checkpoint + 1).max((next_checkpoint as f64 * 1.05).ceil() as usize);
                }
            }
            Throw::Miss => {
                stats.misses += 1;
                stats.consecutive_misses += 1;
            }
        }
    }
    stats.elapsed_s = start.elapsed().as_secs_f64();
    let n = state.cloud.len();
    if stats.inserted_over_time.last().map(|e| e.1) != Some(n) {
        stats.inserted_over_time.push((stats.elapsed_s, n));
    }
    stats.peak_memory_estimate = memory_estimate(n, cfg.d);
    Ok((state.into_cloud(), stats))
}

/// Spacing quality of a point cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quality {
    /// Smallest pairwise distance.
    pub r_f_measured: f64,
    /// Largest probe-to-nearest-sample distance; a lower bound on the coverage radius.
    pub r_c_estimate: f64,
    /// `r_c_estimate / r_f` with the configured disk radius.
    pub aspect_ratio: f64,
}

const PROBE_CHUNK: usize = 4096;

/// Estimate free radius, coverage radius and their ratio.
///
/// The coverage radius is the maximum over `probes` uniform random points of
/// the distance to the nearest sample.
pub fn measure_quality(cloud: &PointCloud, probes: usize, rng: &mut RngStream) -> Result<Quality> {
    if cloud.len() < 2 {
        return Err(Error::InsufficientPoints(cloud.len()));
    }
    let tree = KdTree::build(cloud);
    let d = cloud.dim();
    let r_f_measured = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            tree.nearest(cloud, cloud.point(i), Some(i))
                .map_or(f64::INFINITY, |(_, d2)| d2)
        })
        .reduce(|| f64::INFINITY, f64::min)
        .sqrt();

    let seed = rng.next_seed();
    let chunks = probes.div_ceil(PROBE_CHUNK);
    let r_c2 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut local = RngStream::keyed(seed, &[c as u64]);
            let count = PROBE_CHUNK.min(probes - c * PROBE_CHUNK);
            let mut q = vec![0.0; d];
            let mut worst: f64 = 0.0;
            for _ in 0..count {
                q.iter_mut().for_each(|x| *x = local.uniform());
                if let Some((_, d2)) = tree.nearest(cloud, &q, None) {
                    worst = worst.max(d2);
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    let r_c_estimate = r_c2.sqrt();
    Ok(Quality {
        r_f_measured,
        r_c_estimate,
        aspect_ratio: r_c_estimate / cloud.r_f(),
    })
}

/// Default probe count: `10^6` up to four dimensions, `10^5` above.
pub fn default_probes(d: usize) -> usize {
    if d <= 4 {
        1_000_000
    } else {
        100_000
    }
}
