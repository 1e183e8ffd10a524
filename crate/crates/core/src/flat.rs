//! Flats, darts and their random placement.
//!
//! An aligned flat of dimension `k` in `d` dimensions fixes `d-k` coordinates
//! and lets the remaining `k` vary. A dart is the set of `C(d,k)` such flats,
//! one per choice of fixed coordinate indices, each placed independently.
//! In the plane we additionally support arbitrarily oriented lines.

use rand::seq::SliceRandom;

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Largest number of flats per dart an experiment may request.
pub const MAX_FLATS_PER_DART: usize = 1_000_000;

/// Binomial coefficient with overflow checking.
pub fn binomial(n: usize, k: usize) -> Option<usize> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) is always an integer at this step
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// All `m`-element subsets of `0..n`, sorted, in lexicographic order.
pub fn combinations(n: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if m > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        out.push(idx.clone());
        // find rightmost index that can be advanced
        let mut i = m;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - m {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..m {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// A flat parallel to the coordinate axes.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedFlat {
    dim: usize,
    fixed_idx: Vec<usize>,
    fixed_val: Vec<f64>,
}

impl AlignedFlat {
    /// `fixed_idx` must be strictly increasing and below `dim`.
    pub fn new(dim: usize, fixed_idx: Vec<usize>, fixed_val: Vec<f64>) -> Result<Self> {
        if fixed_idx.len() != fixed_val.len() || fixed_idx.len() > dim {
            return Err(Error::InvalidDimension {
                d: dim,
                k: dim.saturating_sub(fixed_idx.len()),
            });
        }
        if fixed_idx.windows(2).any(|w| w[0] >= w[1]) || fixed_idx.iter().any(|&i| i >= dim) {
            return Err(Error::InvalidConfig(format!(
                "fixed indices {fixed_idx:?} are not a sorted subset of 0..{dim}"
            )));
        }
        Ok(Self {
            dim,
            fixed_idx,
            fixed_val,
        })
    }

    /// A point, i.e. the flat with every coordinate fixed.
    pub fn point(x: Vec<f64>) -> Self {
        Self {
            dim: x.len(),
            fixed_idx: (0..x.len()).collect(),
            fixed_val: x,
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.dim - self.fixed_idx.len()
    }

    #[inline]
    pub fn fixed_idx(&self) -> &[usize] {
        &self.fixed_idx
    }

    #[inline]
    pub fn fixed_val(&self) -> &[f64] {
        &self.fixed_val
    }

    pub fn free_axes(&self) -> Vec<usize> {
        let mut free = Vec::with_capacity(self.k());
        let mut fixed = self.fixed_idx.iter().peekable();
        for i in 0..self.dim {
            if fixed.peek() == Some(&&i) {
                fixed.next();
            } else {
                free.push(i);
            }
        }
        free
    }

    /// Writes the point of the flat with the given free coordinates into `out`.
    pub fn embed(&self, free: &[f64], out: &mut [f64]) {
        debug_assert_eq!(free.len(), self.k());
        debug_assert_eq!(out.len(), self.dim);
        let mut fixed = self.fixed_idx.iter().zip(&self.fixed_val).peekable();
        let mut free_it = free.iter();
        for (i, slot) in out.iter_mut().enumerate() {
            match fixed.peek() {
                Some((&j, &v)) if j == i => {
                    *slot = v;
                    fixed.next();
                }
                _ => *slot = *free_it.next().expect("free coordinate count"),
            }
        }
    }
}

/// A line in the plane with arbitrary orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientedLine {
    pub anchor: [f64; 2],
    /// Unit direction.
    pub direction: [f64; 2],
}

impl OrientedLine {
    pub fn from_angle(anchor: [f64; 2], theta: f64) -> Self {
        Self {
            anchor,
            direction: [theta.cos(), theta.sin()],
        }
    }

    /// Parameter interval `[t0, t1]` of `anchor + t*direction` inside `domain`,
    /// or `None` when the line misses the box.
    pub fn clip(&self, domain: &BoxDomain) -> Option<(f64, f64)> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for axis in 0..2 {
            let (p, v) = (self.anchor[axis], self.direction[axis]);
            let (lo, hi) = (domain.lo()[axis], domain.hi()[axis]);
            if v.abs() < 1e-300 {
                if p < lo || p > hi {
                    return None;
                }
                continue;
            }
            let (a, b) = ((lo - p) / v, (hi - p) / v);
            let (a, b) = if a < b { (a, b) } else { (b, a) };
            t0 = t0.max(a);
            t1 = t1.min(b);
        }
        (t0 <= t1).then_some((t0, t1))
    }
}

/// A `k`-dimensional flat: axis-aligned, or (for `d = 2`, `k = 1`) an oriented line.
#[derive(Debug, Clone, PartialEq)]
pub enum Flat {
    Aligned(AlignedFlat),
    Line2d(OrientedLine),
}

impl Flat {
    pub fn dim(&self) -> usize {
        match self {
            Flat::Aligned(f) => f.dim(),
            Flat::Line2d(_) => 2,
        }
    }

    pub fn k(&self) -> usize {
        match self {
            Flat::Aligned(f) => f.k(),
            Flat::Line2d(_) => 1,
        }
    }

    pub fn as_aligned(&self) -> Option<&AlignedFlat> {
        match self {
            Flat::Aligned(f) => Some(f),
            Flat::Line2d(_) => None,
        }
    }
}

/// Clip a flat to the domain and return its `k`-volume.
///
/// Aligned flats have the product of the free extents (1 for a point);
/// oriented lines have the Euclidean length of the clipped chord.
pub fn clipped_flat_measure(flat: &Flat, domain: &BoxDomain) -> f64 {
    match flat {
        Flat::Aligned(f) => f.free_axes().iter().map(|&i| domain.extent(i)).product(),
        Flat::Line2d(line) => line.clip(domain).map_or(0.0, |(a, b)| b - a),
    }
}

/// A set of flats sampled together.
///
/// Aligned darts hold `C(d,k)` flats, one per fixed-index combination.
/// Unaligned planar darts hold one line, or two perpendicular lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Dart {
    pub k: usize,
    pub flats: Vec<Flat>,
}

impl Dart {
    pub fn len(&self) -> usize {
        self.flats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flats.is_empty()
    }
}

/// Random point in the domain, as a `k = 0` dart.
pub fn gen_point_dart(domain: &BoxDomain, rng: &mut RngStream) -> Dart {
    let x = (0..domain.dim())
        .map(|i| rng.uniform_in(domain.lo()[i], domain.hi()[i]))
        .collect();
    Dart {
        k: 0,
        flats: vec![Flat::Aligned(AlignedFlat::point(x))],
    }
}

/// Reusable generator for aligned darts of a fixed `(d, k)`.
#[derive(Debug, Clone)]
pub struct AlignedDartSampler {
    domain: BoxDomain,
    k: usize,
    families: Vec<Vec<usize>>,
}

impl AlignedDartSampler {
    pub fn new(domain: &BoxDomain, k: usize) -> Result<Self> {
        let d = domain.dim();
        if k > d {
            return Err(Error::InvalidDimension { d, k });
        }
        let count = binomial(d, k).ok_or_else(|| {
            Error::InvalidConfig(format!("C({d},{k}) overflows"))
        })?;
        if count > MAX_FLATS_PER_DART {
            return Err(Error::InvalidConfig(format!(
                "C({d},{k}) = {count} exceeds the cap of {MAX_FLATS_PER_DART} flats per dart"
            )));
        }
        Ok(Self {
            domain: domain.clone(),
            k,
            families: combinations(d, d - k),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn flats_per_dart(&self) -> usize {
        self.families.len()
    }

    /// Fixed-index sets, in the order flats appear in a dart.
    pub fn families(&self) -> &[Vec<usize>] {
        &self.families
    }

    /// One flat of family `family` with uniformly drawn fixed values.
    pub fn sample_flat(&self, family: usize, rng: &mut RngStream) -> Flat {
        let idx = &self.families[family];
        let vals = idx
            .iter()
            .map(|&i| rng.uniform_in(self.domain.lo()[i], self.domain.hi()[i]))
            .collect();
        Flat::Aligned(AlignedFlat {
            dim: self.domain.dim(),
            fixed_idx: idx.clone(),
            fixed_val: vals,
        })
    }

    pub fn sample(&self, rng: &mut RngStream) -> Dart {
        Dart {
            k: self.k,
            flats: (0..self.families.len())
                .map(|f| self.sample_flat(f, rng))
                .collect(),
        }
    }

    /// `n` darts stratified per fixed coordinate (Latin hypercube).
    ///
    /// For each family and each fixed axis the `n` values occupy the `n` equal
    /// strata of that axis once each, jittered uniformly within the stratum,
    /// in an independently shuffled order.
    pub fn sample_lhs(&self, n: usize, rng: &mut RngStream) -> Vec<Dart> {
        let d = self.domain.dim();
        let mut flats_by_family: Vec<Vec<Flat>> = Vec::with_capacity(self.families.len());
        let mut strata: Vec<usize> = (0..n).collect();
        for idx in &self.families {
            let mut values = vec![Vec::with_capacity(idx.len()); n];
            for &axis in idx {
                strata.shuffle(rng);
                let (lo, w) = (self.domain.lo()[axis], self.domain.extent(axis));
                for (dart, &s) in strata.iter().enumerate() {
                    let u = (s as f64 + rng.uniform()) / n as f64;
                    values[dart].push(lo + w * u);
                }
            }
            flats_by_family.push(
                values
                    .into_iter()
                    .map(|fixed_val| {
                        Flat::Aligned(AlignedFlat {
                            dim: d,
                            fixed_idx: idx.clone(),
                            fixed_val,
                        })
                    })
                    .collect(),
            );
        }
        let mut iters: Vec<_> = flats_by_family.into_iter().map(|v| v.into_iter()).collect();
        (0..n)
            .map(|_| Dart {
                k: self.k,
                flats: iters.iter_mut().map(|it| it.next().unwrap()).collect(),
            })
            .collect()
    }
}

/// Aligned dart of `C(d,k)` independently placed flats.
pub fn gen_aligned_dart(domain: &BoxDomain, k: usize, rng: &mut RngStream) -> Result<Dart> {
    Ok(AlignedDartSampler::new(domain, k)?.sample(rng))
}

/// `n` Latin-hypercube stratified aligned darts.
pub fn gen_lhs_darts(
    domain: &BoxDomain,
    k: usize,
    n: usize,
    rng: &mut RngStream,
) -> Result<Vec<Dart>> {
    if n == 0 {
        return Err(Error::InvalidConfig("LHS needs n >= 1".into()));
    }
    Ok(AlignedDartSampler::new(domain, k)?.sample_lhs(n, rng))
}

/// Endpoints of the two main diagonals of a planar box.
fn diagonals(domain: &BoxDomain) -> [([f64; 2], [f64; 2]); 2] {
    let (lo, hi) = (domain.lo(), domain.hi());
    [
        ([lo[0], lo[1]], [hi[0], hi[1]]),
        ([lo[0], hi[1]], [hi[0], lo[1]]),
    ]
}

/// Index of the diagonal that every line with direction `dir` through the box crosses:
/// the one whose endpoints spread furthest along the line normal.
fn crossing_diagonal(domain: &BoxDomain, dir: [f64; 2]) -> usize {
    let normal = [-dir[1], dir[0]];
    let spread = |(a, b): ([f64; 2], [f64; 2])| {
        ((b[0] - a[0]) * normal[0] + (b[1] - a[1]) * normal[1]).abs()
    };
    let [d0, d1] = diagonals(domain);
    if spread(d0) >= spread(d1) {
        0
    } else {
        1
    }
}

fn point_on_diagonal(domain: &BoxDomain, which: usize, u: f64) -> [f64; 2] {
    let (a, b) = diagonals(domain)[which];
    [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])]
}

/// Randomly oriented line dart in the plane.
///
/// The angle is uniform on `[0, pi)`; the anchor is uniform along the main
/// diagonal the line must cross. With `orthogonal_pair` a second, perpendicular
/// line is anchored uniformly on the other diagonal.
pub fn gen_unaligned_line_dart_2d(
    domain: &BoxDomain,
    orthogonal_pair: bool,
    rng: &mut RngStream,
) -> Result<Dart> {
    if domain.dim() != 2 {
        return Err(Error::UnsupportedDimension(format!(
            "unaligned darts need d = 2, got d = {}",
            domain.dim()
        )));
    }
    let theta = rng.uniform_in(0.0, std::f64::consts::PI);
    let dir = [theta.cos(), theta.sin()];
    let diag = crossing_diagonal(domain, dir);
    let first = OrientedLine {
        anchor: point_on_diagonal(domain, diag, rng.uniform()),
        direction: dir,
    };
    let mut flats = vec![Flat::Line2d(first)];
    if orthogonal_pair {
        let perp = [-dir[1], dir[0]];
        flats.push(Flat::Line2d(OrientedLine {
            anchor: point_on_diagonal(domain, 1 - diag, rng.uniform()),
            direction: perp,
        }));
    }
    Ok(Dart { k: 1, flats })
}
