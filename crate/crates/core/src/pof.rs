//! Probability of failure on analytic response surfaces.
//!
//! Failure is `y(x) < y_t` on the unit box. Point darts estimate the failure
//! fraction with an indicator; line darts measure the exact length of the
//! failure set along an axis-parallel line through a random point.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::Estimate;
use crate::numeric::{bisect, scan_roots, GaussLegendre};
use crate::rng::RngStream;
use crate::shapes::ball_volume;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SurfaceKind {
    /// `sum (2 x_i - 1)^2`
    CircularParabola,
    /// `[prod (1 + cos 2 pi x_i) / 2]^(1/d)`
    PlanarCross,
}

impl SurfaceKind {
    pub fn name(self) -> &'static str {
        match self {
            SurfaceKind::CircularParabola => "parabola",
            SurfaceKind::PlanarCross => "cross",
        }
    }

    fn tag(self) -> u64 {
        match self {
            SurfaceKind::CircularParabola => 1,
            SurfaceKind::PlanarCross => 2,
        }
    }
}

impl fmt::Display for SurfaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SurfaceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parabola" => Ok(SurfaceKind::CircularParabola),
            "cross" => Ok(SurfaceKind::PlanarCross),
            _ => Err(Error::InvalidConfig(format!("unknown surface `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResponseSurface {
    pub kind: SurfaceKind,
    pub d: usize,
}

impl ResponseSurface {
    pub fn new(kind: SurfaceKind, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidDimension { d, k: 0 });
        }
        Ok(Self { kind, d })
    }

    /// Value without the open-box check.
    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        match self.kind {
            SurfaceKind::CircularParabola => x.iter().map(|&v| sq(2.0 * v - 1.0)).sum(),
            SurfaceKind::PlanarCross => {
                let p: f64 = x.iter().map(|&v| cross_factor(v)).product();
                p.powf(1.0 / self.d as f64)
            }
        }
    }

    pub fn max_value(&self) -> f64 {
        match self.kind {
            SurfaceKind::CircularParabola => self.d as f64,
            SurfaceKind::PlanarCross => 1.0,
        }
    }
}

#[inline]
fn sq(x: f64) -> f64 {
    x * x
}

/// `(1 + cos 2 pi x) / 2 = cos^2(pi x)`
#[inline]
fn cross_factor(x: f64) -> f64 {
    sq((PI * x).cos())
}

/// Evaluate `s` at a point of the open unit box.
pub fn eval_surface(s: &ResponseSurface, x: &[f64]) -> Result<f64> {
    if x.len() != s.d {
        return Err(Error::InvalidDimension { d: x.len(), k: s.d });
    }
    if !x.iter().all(|&v| v > 0.0 && v < 1.0) {
        return Err(Error::OutsideDomain);
    }
    Ok(s.value(x))
}

/// A surface with its failure threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailureSpec {
    pub surface: ResponseSurface,
    pub y_t: f64,
    pub target_pf: f64,
}

impl FailureSpec {
    pub fn calibrated(surface: ResponseSurface, target_pf: f64) -> Result<Self> {
        let y_t = calibrate_threshold(&surface, target_pf)?;
        Ok(Self {
            surface,
            y_t,
            target_pf,
        })
    }
}

/// Threshold `y_t` whose failure set `{y < y_t}` has volume `target_pf`.
pub fn calibrate_threshold(s: &ResponseSurface, target_pf: f64) -> Result<f64> {
    if !(target_pf > 0.0 && target_pf < 0.5) {
        return Err(Error::Calibration(format!(
            "target probability must lie in (0, 0.5), got {target_pf}"
        )));
    }
    match s.kind {
        SurfaceKind::CircularParabola => {
            // failure set is the ball of radius sqrt(y_t)/2 around the centre
            let r = (target_pf / ball_volume(s.d, 1.0)).powf(1.0 / s.d as f64);
            if r > 0.5 {
                return Err(Error::Calibration(format!(
                    "failure ball of radius {r} leaves the unit box in d={}",
                    s.d
                )));
            }
            Ok(4.0 * r * r)
        }
        SurfaceKind::PlanarCross => CrossVolume::new(s.d).threshold(target_pf),
    }
}

/// Failure volume `P(y < y_t)` from the analytic (parabola) or quadrature
/// (planar cross) oracle.
pub fn failure_probability(s: &ResponseSurface, y_t: f64) -> Result<f64> {
    if y_t <= 0.0 {
        return Ok(0.0);
    }
    match s.kind {
        SurfaceKind::CircularParabola => {
            let r = 0.5 * y_t.sqrt();
            if r > 0.5 {
                return Err(Error::Calibration(format!(
                    "threshold {y_t} gives a failure ball leaving the unit box"
                )));
            }
            Ok(ball_volume(s.d, r))
        }
        SurfaceKind::PlanarCross => Ok(CrossVolume::new(s.d).cdf(y_t.powi(s.d as i32))),
    }
}

/// Distribution of `prod_{i<=m} cos^2(pi U_i)` for uniform `U_i`.
///
/// `H_1(z) = (2/pi) asin(sqrt z)`, and `H_m(z) = E[H_{m-1}(z / cos^2(pi U))]`.
/// The recursion is integrated with graded Gauss-Legendre panels and each
/// `H_m` is tabulated as `ln H` against `w = sqrt(-ln z)`, where it is smooth
/// at both ends.
#[derive(Debug, Clone)]
pub struct CrossVolume {
    d: usize,
    tables: Vec<Vec<f64>>,
    gl: GaussLegendre,
}

const TABLE_POINTS: usize = 2400;
const LN_Z_MIN: f64 = -160.0;

impl CrossVolume {
    pub fn new(d: usize) -> Self {
        assert!(d >= 1);
        let mut cv = Self {
            d,
            tables: Vec::new(),
            gl: GaussLegendre::new(20),
        };
        // tables[m - 2] holds H_m for 2 <= m < d
        for m in 2..d {
            let table: Vec<f64> = (0..TABLE_POINTS)
                .into_par_iter()
                .map(|i| {
                    let w = i as f64 * Self::w_step();
                    cv.h_integrate(m, (-w * w).exp()).ln()
                })
                .collect();
            cv.tables.push(table);
        }
        cv
    }

    fn w_step() -> f64 {
        (-LN_Z_MIN).sqrt() / (TABLE_POINTS - 1) as f64
    }

    /// Smallest product value the oracle resolves.
    pub fn z_min() -> f64 {
        LN_Z_MIN.exp()
    }

    /// `P(prod_{i<=d} cos^2(pi U_i) < z)`.
    pub fn cdf(&self, z: f64) -> f64 {
        self.h(self.d, z)
    }

    fn h(&self, m: usize, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        if z >= 1.0 {
            return 1.0;
        }
        match m {
            1 => 2.0 / PI * z.sqrt().asin(),
            _ if m == self.d => self.h_integrate(m, z),
            _ => self.h_table(m, z),
        }
    }

    fn h_table(&self, m: usize, z: f64) -> f64 {
        let table = &self.tables[m - 2];
        let w = (-z.ln()).sqrt();
        let t = w / Self::w_step();
        let i = (t.floor() as isize - 1).clamp(0, TABLE_POINTS as isize - 4) as usize;
        let x = t - i as f64;
        // four-point Lagrange interpolation on nodes 0..3
        let y = &table[i..i + 4];
        let l0 = -(x - 1.0) * (x - 2.0) * (x - 3.0) / 6.0;
        let l1 = x * (x - 2.0) * (x - 3.0) / 2.0;
        let l2 = -x * (x - 1.0) * (x - 3.0) / 2.0;
        let l3 = x * (x - 1.0) * (x - 2.0) / 6.0;
        (l0 * y[0] + l1 * y[1] + l2 * y[2] + l3 * y[3]).exp()
    }

    fn h_integrate(&self, m: usize, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        if z >= 1.0 {
            return 1.0;
        }
        // beyond x* = acos(sqrt z)/pi one factor alone is below z
        let x_star = z.sqrt().acos() / PI;
        let head = 2.0 * z.sqrt().asin() / PI;
        // x = x*(1 - tau^2) removes the endpoint singularity at x*
        let integrand = |tau: f64| {
            let x = x_star * (1.0 - tau * tau);
            let c = cross_factor(x);
            let arg = if c > 0.0 { z / c } else { 1.0 };
            self.h(m - 1, arg) * 2.0 * x_star * tau
        };
        let mut a = 0.0;
        let mut b = (1e-3 * z.powf(0.25)).min(1.0);
        let mut body = 0.0;
        loop {
            body += self.gl.integrate(a, b, integrand);
            if b >= 1.0 {
                break;
            }
            a = b;
            b = (2.0 * b).min(1.0);
        }
        (head + 2.0 * body).min(1.0)
    }

    /// Threshold `y_t = z^(1/d)` with `cdf(z) = pf`.
    pub fn threshold(&self, pf: f64) -> Result<f64> {
        if self.cdf(Self::z_min()) > pf {
            return Err(Error::Calibration(format!(
                "probability {pf} is below the oracle's range in d={}",
                self.d
            )));
        }
        let s = bisect(|s| self.cdf(s.exp()) - pf, LN_Z_MIN, 0.0, 1e-12).ok_or_else(|| {
            Error::Calibration("no sign change while bracketing the threshold".into())
        })?;
        Ok((s / self.d as f64).exp())
    }
}

/// Length of `{t in (0,1) : y < y_t}` on the line through `x` along `axis`
/// (the value `x[axis]` is ignored).
pub fn line_failure_length(spec: &FailureSpec, x: &[f64], axis: usize) -> f64 {
    let s = &spec.surface;
    let y_t = spec.y_t;
    if y_t <= 0.0 {
        return 0.0;
    }
    match s.kind {
        SurfaceKind::CircularParabola => {
            let c: f64 = x
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != axis)
                .map(|(_, &v)| sq(2.0 * v - 1.0))
                .sum();
            if c >= y_t {
                0.0
            } else {
                // (2t - 1)^2 < y_t - c
                (y_t - c).sqrt().min(1.0)
            }
        }
        SurfaceKind::PlanarCross => {
            let other: f64 = x
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != axis)
                .map(|(_, &v)| cross_factor(v))
                .product();
            let z = y_t.powi(s.d as i32);
            if other <= 0.0 || z >= other {
                return 1.0;
            }
            // cos^2(pi t) < c on one interval centred at t = 1/2 per period
            let len = 2.0 / PI * (z / other).sqrt().asin();
            if len.is_finite() && (0.0..=1.0).contains(&len) {
                len
            } else {
                numeric_failure_length(spec, x, axis)
            }
        }
    }
}

/// Failure length from a 256-cell sign-change scan refined by bisection.
pub fn numeric_failure_length(spec: &FailureSpec, x: &[f64], axis: usize) -> f64 {
    let mut p = x.to_vec();
    let mut g = |t: f64| {
        p[axis] = t;
        spec.surface.value(&p) - spec.y_t
    };
    let roots = scan_roots(&mut g, 0.0, 1.0, 256, 1e-12);
    let mut cuts = Vec::with_capacity(roots.len() + 2);
    cuts.push(0.0);
    cuts.extend(roots);
    cuts.push(1.0);
    cuts.windows(2)
        .filter(|w| w[1] > w[0] && g(0.5 * (w[0] + w[1])) < 0.0)
        .map(|w| w[1] - w[0])
        .sum()
}

/// Failure length along `axis` with the other `d - 1` coordinates in `fixed`.
pub fn failure_length(spec: &FailureSpec, axis: usize, fixed: &[f64]) -> Result<f64> {
    let d = spec.surface.d;
    if axis >= d || fixed.len() + 1 != d {
        return Err(Error::InvalidDimension { d, k: 1 });
    }
    let mut x = Vec::with_capacity(d);
    x.extend_from_slice(&fixed[..axis]);
    x.push(0.5);
    x.extend_from_slice(&fixed[axis..]);
    Ok(line_failure_length(spec, &x, axis))
}

/// Running mean and variance.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    #[inline]
    fn push(&mut self, v: f64) {
        self.n += 1;
        let delta = v - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (v - self.mean);
    }

    fn estimate(&self) -> Estimate {
        let var = if self.n > 1 {
            self.m2 / (self.n - 1) as f64
        } else {
            0.0
        };
        Estimate {
            mean: self.mean,
            std_error: (var / self.n as f64).sqrt(),
            n: self.n,
            per_sample: None,
        }
    }
}

/// Estimate the failure probability from `n_flats` points (`k = 0`) or
/// axis-parallel lines (`k = 1`, flat `j` along axis `j mod d`).
pub fn estimate_pof(spec: &FailureSpec, k: usize, n_flats: usize, rng: &mut RngStream) -> Result<Estimate> {
    let d = spec.surface.d;
    if k > 1 {
        return Err(Error::InvalidDimension { d, k });
    }
    if n_flats == 0 {
        return Err(Error::EmptySample);
    }
    let mut acc = Welford::default();
    let mut x = vec![0.0; d];
    for j in 0..n_flats {
        if k == 0 {
            x.iter_mut().for_each(|v| *v = rng.uniform());
            acc.push(if spec.surface.value(&x) < spec.y_t { 1.0 } else { 0.0 });
        } else {
            let axis = j % d;
            for (i, v) in x.iter_mut().enumerate() {
                *v = if i == axis { 0.5 } else { rng.uniform() };
            }
            acc.push(line_failure_length(spec, &x, axis));
        }
    }
    Ok(acc.estimate())
}

/// Replicated estimates for one `(spec, k, n)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicates {
    pub k: usize,
    pub n: usize,
    pub estimates: Vec<f64>,
    /// Mean wall time of one replication in seconds.
    pub wall_s: f64,
}

impl Replicates {
    pub fn mean(&self) -> f64 {
        crate::stats::mean(&self.estimates)
    }

    /// Root-mean-square relative error against `truth`.
    pub fn rms_rel(&self, truth: f64) -> f64 {
        let ss: f64 = self.estimates.iter().map(|e| sq(e / truth - 1.0)).sum();
        (ss / self.estimates.len() as f64).sqrt()
    }
}

fn cell_key(spec: &FailureSpec) -> [u64; 3] {
    [
        spec.surface.kind.tag(),
        spec.surface.d as u64,
        spec.target_pf.to_bits(),
    ]
}

/// Run `reps` independent estimates; the stream of replication `r` depends
/// only on `(seed, surface, d, pf, k, n, r)`.
pub fn replicate(spec: &FailureSpec, k: usize, n: usize, reps: usize, seed: u64) -> Result<Replicates> {
    if reps == 0 {
        return Err(Error::EmptySample);
    }
    let key = cell_key(spec);
    let runs: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::keyed(seed, &[key[0], key[1], key[2], k as u64, n as u64, r as u64]);
            let t = Instant::now();
            let e = estimate_pof(spec, k, n, &mut rng)?;
            Ok((e.mean, t.elapsed().as_secs_f64()))
        })
        .collect::<Result<_>>()?;
    Ok(Replicates {
        k,
        n,
        estimates: runs.iter().map(|r| r.0).collect(),
        wall_s: runs.iter().map(|r| r.1).sum::<f64>() / reps as f64,
    })
}

/// One output row of a probability-of-failure study.
#[derive(Debug, Clone, PartialEq)]
pub struct PofRow {
    pub surface: SurfaceKind,
    pub d: usize,
    pub pf: f64,
    pub k: usize,
    pub n: usize,
    pub estimate: f64,
    pub rms_rel: f64,
    pub wall_s: f64,
    /// Point-dart time over line-dart time at matched accuracy.
    pub speedup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupConfig {
    pub surfaces: Vec<SurfaceKind>,
    pub dims: Vec<usize>,
    pub pfs: Vec<f64>,
    pub reps: usize,
    pub target_rms: f64,
    pub n_start: usize,
    pub n_max: usize,
    pub seed: u64,
}

impl Default for SpeedupConfig {
    fn default() -> Self {
        Self {
            surfaces: vec![SurfaceKind::CircularParabola],
            dims: vec![2],
            pfs: vec![1e-5],
            reps: 30,
            target_rms: 0.1,
            n_start: 1000,
            n_max: 1 << 30,
            seed: 0,
        }
    }
}

/// Smallest `n = n_start * 2^j` whose replicated relative RMS is below the target.
pub fn matched_replicates(spec: &FailureSpec, k: usize, cfg: &SpeedupConfig) -> Result<Replicates> {
    let mut n = cfg.n_start.max(1);
    loop {
        let reps = replicate(spec, k, n, cfg.reps, cfg.seed)?;
        if reps.rms_rel(spec.target_pf) < cfg.target_rms || n.saturating_mul(2) > cfg.n_max {
            return Ok(reps);
        }
        n *= 2;
    }
}

/// For each `(surface, d, pf)` grow the point- and line-dart budgets until
/// both reach the target RMS, then report their per-replication times and
/// the speedup `t_point / t_line`.
pub fn speedup_experiment(cfg: &SpeedupConfig) -> Result<Vec<PofRow>> {
    let mut rows = Vec::new();
    for &kind in &cfg.surfaces {
        for &d in &cfg.dims {
            for &pf in &cfg.pfs {
                let spec = FailureSpec::calibrated(ResponseSurface::new(kind, d)?, pf)?;
                let point = matched_replicates(&spec, 0, cfg)?;
                let line = matched_replicates(&spec, 1, cfg)?;
                let speedup = point.wall_s / line.wall_s;
                for r in [point, line] {
                    rows.push(PofRow {
                        surface: kind,
                        d,
                        pf,
                        k: r.k,
                        n: r.n,
                        estimate: r.mean(),
                        rms_rel: r.rms_rel(pf),
                        wall_s: r.wall_s,
                        speedup: Some(speedup),
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// Fixed-budget rows for every `(surface, d, pf, k, n)`; `speedup` is the
/// efficiency ratio `t_0 rms_0^2 / (t_1 rms_1^2)` on the line-dart row when
/// both `k` are present.
pub fn budget_experiment(
    surfaces: &[SurfaceKind],
    dims: &[usize],
    pfs: &[f64],
    ks: &[usize],
    ns: &[usize],
    reps: usize,
    seed: u64,
) -> Result<Vec<PofRow>> {
    let mut rows = Vec::new();
    for &kind in surfaces {
        for &d in dims {
            for &pf in pfs {
                let spec = FailureSpec::calibrated(ResponseSurface::new(kind, d)?, pf)?;
                for &n in ns {
                    let cell: Vec<Replicates> = ks
                        .iter()
                        .map(|&k| replicate(&spec, k, n, reps, seed))
                        .collect::<Result<_>>()?;
                    let cost = |k: usize| {
                        cell.iter()
                            .find(|r| r.k == k)
                            .map(|r| r.wall_s * sq(r.rms_rel(pf)))
                    };
                    let efficiency = match (cost(0), cost(1)) {
                        (Some(c0), Some(c1)) if c1 > 0.0 => Some(c0 / c1),
                        _ => None,
                    };
                    for r in &cell {
                        rows.push(PofRow {
                            surface: kind,
                            d,
                            pf,
                            k: r.k,
                            n,
                            estimate: r.mean(),
                            rms_rel: r.rms_rel(pf),
                            wall_s: r.wall_s,
                            speedup: if r.k == 1 { efficiency } else { None },
                        });
                    }
                }
            }
        }
    }
    Ok(rows)
}
