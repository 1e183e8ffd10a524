//! Function estimation with darts.
//!
//! Each flat contributes the weighted average `H = G / |F|` of the integrand
//! over its clipped extent; a dart's value is the mean of `H` over its flats,
//! and darts are combined like ordinary point samples.

use std::time::Instant;

use rayon::prelude::*;

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::flat::{
    clipped_flat_measure, gen_unaligned_line_dart_2d, AlignedDartSampler, Dart, Flat,
};
use crate::rng::RngStream;
use crate::stats;

/// Cells per flat used when an integrand has no analytic flat integral.
const DEFAULT_GRID_CELLS: f64 = 1e6;

/// An integrand that can be evaluated pointwise and, optionally, integrated
/// analytically over a flat.
pub trait FlatIntegrable: Sync {
    fn value_at(&self, x: &[f64]) -> f64;

    /// Integral over the part of the flat inside the domain, if known in
    /// closed form.
    fn flat_integral(&self, _flat: &Flat) -> Option<Result<f64>> {
        None
    }
}

/// Adapter for plain closures; always integrated on a grid.
pub struct Pointwise<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Sync> FlatIntegrable for Pointwise<F> {
    fn value_at(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}

/// Constant integrand.
pub struct Constant(pub f64);

impl FlatIntegrable for Constant {
    fn value_at(&self, _x: &[f64]) -> f64 {
        self.0
    }
}

/// Mean with its standard error `sigma / sqrt(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
    pub per_sample: Option<Vec<f64>>,
}

impl Estimate {
    pub fn from_samples(values: Vec<f64>, keep: bool) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        let n = values.len();
        let mean = stats::mean(&values);
        let std_error = (stats::sample_variance(&values) / n as f64).sqrt();
        Ok(Self {
            mean,
            std_error,
            n,
            per_sample: keep.then_some(values),
        })
    }

    /// Both mean and standard error multiplied by `factor`, e.g. a domain volume.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            mean: self.mean * factor,
            std_error: self.std_error * factor.abs(),
            n: self.n,
            per_sample: self
                .per_sample
                .as_ref()
                .map(|v| v.iter().map(|x| x * factor).collect()),
        }
    }
}

/// Composite midpoint rule over the clipped flat with `resolution` cells per free axis.
pub fn integrate_flat_grid<F>(
    flat: &Flat,
    f: F,
    domain: &BoxDomain,
    resolution: usize,
) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    if resolution < 2 {
        return Err(Error::InvalidResolution(resolution));
    }
    match flat {
        Flat::Aligned(af) => {
            let k = af.k();
            if k == 0 {
                return Err(Error::InvalidDimension { d: af.dim(), k });
            }
            let free = af.free_axes();
            let h: Vec<f64> = free
                .iter()
                .map(|&i| domain.extent(i) / resolution as f64)
                .collect();
            let cell: f64 = h.iter().product();
            let mut x = vec![0.0; af.dim()];
            for (&i, &v) in af.fixed_idx().iter().zip(af.fixed_val()) {
                x[i] = v;
            }
            let mut counter = vec![0usize; k];
            let mut sum = 0.0;
            'cells: loop {
                for (j, &axis) in free.iter().enumerate() {
                    x[axis] = domain.lo()[axis] + (counter[j] as f64 + 0.5) * h[j];
                }
                sum += f(&x);
                for c in counter.iter_mut() {
                    *c += 1;
                    if *c < resolution {
                        continue 'cells;
                    }
                    *c = 0;
                }
                break;
            }
            Ok(sum * cell)
        }
        Flat::Line2d(line) => {
            let Some((t0, t1)) = line.clip(domain) else {
                return Ok(0.0);
            };
            let h = (t1 - t0) / resolution as f64;
            let mut sum = 0.0;
            for c in 0..resolution {
                let t = t0 + (c as f64 + 0.5) * h;
                let x = [
                    line.anchor[0] + t * line.direction[0],
                    line.anchor[1] + t * line.direction[1],
                ];
                sum += f(&x);
            }
            Ok(sum * h)
        }
    }
}

fn default_resolution(k: usize) -> usize {
    (DEFAULT_GRID_CELLS.powf(1.0 / k as f64).floor() as usize).max(2)
}

/// Weighted average `H = G / |F|` of `f` over a flat.
pub fn flat_average<T: FlatIntegrable + ?Sized>(
    flat: &Flat,
    f: &T,
    domain: &BoxDomain,
) -> Result<f64> {
    let measure = clipped_flat_measure(flat, domain);
    if !(measure > 0.0) {
        return Err(Error::DegenerateFlat);
    }
    if let Flat::Aligned(af) = flat {
        if af.k() == 0 {
            return Ok(f.value_at(af.fixed_val()));
        }
    }
    let g = match f.flat_integral(flat) {
        Some(g) => g?,
        None => integrate_flat_grid(flat, |x| f.value_at(x), domain, default_resolution(flat.k()))?,
    };
    Ok(g / measure)
}

/// Unweighted mean of the flat averages of a dart.
pub fn dart_value<T: FlatIntegrable + ?Sized>(
    dart: &Dart,
    f: &T,
    domain: &BoxDomain,
) -> Result<f64> {
    if dart.flats.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut sum = 0.0;
    for flat in &dart.flats {
        sum += flat_average(flat, f, domain)?;
    }
    Ok(sum / dart.flats.len() as f64)
}

/// Mean of the dart values with its standard error. Multiply by the domain
/// volume for volume-style estimates.
pub fn estimate_mean<T: FlatIntegrable + ?Sized>(
    f: &T,
    darts: &[Dart],
    domain: &BoxDomain,
) -> Result<Estimate> {
    let values = darts
        .iter()
        .map(|d| dart_value(d, f, domain))
        .collect::<Result<Vec<_>>>()?;
    Estimate::from_samples(values, true)
}

/// How flats are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampler {
    Mc,
    Lhs,
}

/// Kind of dart used in an error-curve experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DartKind {
    /// Axis-aligned dart of `C(d,k)` flats.
    Aligned(usize),
    /// A single randomly oriented line (planar only).
    RandomLine,
    /// Two perpendicular randomly oriented lines (planar only).
    OrthogonalLines,
}

impl DartKind {
    fn stream_tag(self) -> u64 {
        match self {
            DartKind::Aligned(k) => k as u64,
            DartKind::RandomLine => 1 << 32,
            DartKind::OrthogonalLines => (1 << 32) + 1,
        }
    }
}

/// Estimate the domain mean of `f` from a budget of `n_flats` flats.
///
/// Darts are drawn whole and the last one is truncated so exactly `n_flats`
/// flats are evaluated. The mean weights every flat equally; the standard
/// error comes from the per-dart values.
pub fn flat_budget_estimate<T: FlatIntegrable + ?Sized>(
    f: &T,
    domain: &BoxDomain,
    kind: DartKind,
    sampler: Sampler,
    n_flats: usize,
    rng: &mut RngStream,
) -> Result<Estimate> {
    if n_flats == 0 {
        return Err(Error::EmptySample);
    }
    let mut flat_sum = NeumaierSum::default();
    let mut dart_values = Vec::new();
    let mut push_dart = |flats: &[Flat], flat_sum: &mut NeumaierSum| -> Result<()> {
        let mut s = 0.0;
        for fl in flats {
            s += flat_average(fl, f, domain)?;
        }
        flat_sum.add(s);
        dart_values.push(s / flats.len() as f64);
        Ok(())
    };

    match (kind, sampler) {
        (DartKind::Aligned(k), Sampler::Mc) => {
            let gen = AlignedDartSampler::new(domain, k)?;
            let per = gen.flats_per_dart();
            let mut buf = Vec::with_capacity(per);
            let mut left = n_flats;
            while left > 0 {
                buf.clear();
                for fam in 0..per.min(left) {
                    buf.push(gen.sample_flat(fam, rng));
                }
                left -= buf.len();
                push_dart(&buf, &mut flat_sum)?;
            }
        }
        (DartKind::Aligned(k), Sampler::Lhs) => {
            let gen = AlignedDartSampler::new(domain, k)?;
            let per = gen.flats_per_dart();
            let darts = gen.sample_lhs(n_flats.div_ceil(per), rng);
            let mut left = n_flats;
            for dart in &darts {
                let take = per.min(left);
                push_dart(&dart.flats[..take], &mut flat_sum)?;
                left -= take;
            }
        }
        (DartKind::RandomLine | DartKind::OrthogonalLines, Sampler::Mc) => {
            let pair = kind == DartKind::OrthogonalLines;
            let mut left = n_flats;
            while left > 0 {
                let dart = gen_unaligned_line_dart_2d(domain, pair, rng)?;
                let take = dart.len().min(left);
                push_dart(&dart.flats[..take], &mut flat_sum)?;
                left -= take;
            }
        }
        (_, Sampler::Lhs) => {
            return Err(Error::InvalidConfig(
                "Latin hypercube placement is only defined for aligned darts".into(),
            ))
        }
    }

    let mut est = Estimate::from_samples(dart_values, false)?;
    est.mean = flat_sum.total() / n_flats as f64;
    Ok(est)
}

/// Compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct NeumaierSum {
    sum: f64,
    carry: f64,
}

impl NeumaierSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Volume-estimation error study over dart kinds and flat budgets.
pub struct ErrorCurveConfig<'a> {
    pub object: &'a dyn FlatIntegrable,
    pub true_volume: f64,
    pub domain: BoxDomain,
    pub sampler: Sampler,
    pub kinds: Vec<DartKind>,
    pub n_list: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
}

/// One `(kind, n)` cell of an error curve.
#[derive(Debug, Clone)]
pub struct CurveRow {
    pub kind: DartKind,
    pub n: usize,
    pub rms_rel: f64,
    pub mean_abs_rel: f64,
    /// Mean over replications of the volume estimate's standard error.
    pub std_err: f64,
    pub wall_s: f64,
    /// Per-replication volume estimates.
    pub estimates: Vec<f64>,
    /// Per-replication standard errors of the volume estimates.
    pub std_errors: Vec<f64>,
}

impl CurveRow {
    pub fn ratios(&self, true_volume: f64) -> Vec<f64> {
        self.estimates.iter().map(|e| e / true_volume).collect()
    }
}

/// Run `reps` independent replications for every `(kind, n)` cell.
///
/// Replication `r` of cell `(kind, n)` draws from the stream keyed by
/// `(seed; kind, n, r)`, so results do not depend on scheduling.
pub fn error_curve(cfg: &ErrorCurveConfig<'_>) -> Result<Vec<CurveRow>> {
    if cfg.reps == 0 {
        return Err(Error::EmptySample);
    }
    let vol = cfg.domain.volume();
    let mut rows = Vec::new();
    for &kind in &cfg.kinds {
        for &n in &cfg.n_list {
            let start = Instant::now();
            let results: Vec<Estimate> = (0..cfg.reps)
                .into_par_iter()
                .map(|rep| {
                    let mut rng =
                        RngStream::keyed(cfg.seed, &[kind.stream_tag(), n as u64, rep as u64]);
                    flat_budget_estimate(cfg.object, &cfg.domain, kind, cfg.sampler, n, &mut rng)
                        .map(|e| e.scaled(vol))
                })
                .collect::<Result<_>>()?;
            let wall_s = start.elapsed().as_secs_f64();
            let estimates: Vec<f64> = results.iter().map(|e| e.mean).collect();
            let std_errors: Vec<f64> = results.iter().map(|e| e.std_error).collect();
            let rel: Vec<f64> = estimates
                .iter()
                .map(|e| e / cfg.true_volume - 1.0)
                .collect();
            rows.push(CurveRow {
                kind,
                n,
                rms_rel: (rel.iter().map(|r| r * r).sum::<f64>() / rel.len() as f64).sqrt(),
                mean_abs_rel: rel.iter().map(|r| r.abs()).sum::<f64>() / rel.len() as f64,
                std_err: stats::mean(&std_errors),
                wall_s,
                estimates,
                std_errors,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flat::{gen_aligned_dart, gen_point_dart, AlignedFlat};
    use crate::shapes::Sphere;
    use std::f64::consts::PI;

    fn aligned(d: usize, idx: Vec<usize>, val: Vec<f64>) -> Flat {
        Flat::Aligned(AlignedFlat::new(d, idx, val).unwrap())
    }

    #[test]
    fn constant_average_is_constant() {
        let dom = BoxDomain::unit(3);
        let mut rng = RngStream::new(1, 0);
        for k in 0..=3 {
            let dart = gen_aligned_dart(&dom, k, &mut rng).unwrap();
            for fl in &dart.flats {
                let h = flat_average(fl, &Constant(1.0), &dom).unwrap();
                assert!((h - 1.0).abs() < 1e-12);
            }
            let v = dart_value(&dart, &Constant(2.5), &dom).unwrap();
            assert!((v - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_flat_averages() {
        let dom = BoxDomain::two_cube(3);
        let sp = Sphere::unit(3);
        let line = aligned(3, vec![0, 1], vec![0.0, 0.0]);
        assert!((flat_average(&line, &sp, &dom).unwrap() - 1.0).abs() < 1e-12);
        let plane = aligned(3, vec![2], vec![0.0]);
        assert!((flat_average(&plane, &sp, &dom).unwrap() - PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn point_dart_value_is_pointwise() {
        let dom = BoxDomain::unit(2);
        let f = Pointwise(|x: &[f64]| x[0] * 10.0 + x[1]);
        let mut rng = RngStream::new(4, 0);
        let dart = gen_point_dart(&dom, &mut rng);
        let p = dart.flats[0].as_aligned().unwrap().fixed_val().to_vec();
        assert_eq!(dart_value(&dart, &f, &dom).unwrap(), p[0] * 10.0 + p[1]);
    }

    #[test]
    fn full_dart_gives_domain_mean() {
        // mean of x0 + x1^2 over [0,1]^2 is 1/2 + 1/3
        let dom = BoxDomain::unit(2);
        let f = Pointwise(|x: &[f64]| x[0] + x[1] * x[1]);
        let mut rng = RngStream::new(0, 0);
        let dart = gen_aligned_dart(&dom, 2, &mut rng).unwrap();
        let v = dart_value(&dart, &f, &dom).unwrap();
        assert!((v - 5.0 / 6.0).abs() < 1e-6);
    }

    #[test]
    fn estimate_of_constant() {
        let dom = BoxDomain::unit(2);
        let mut rng = RngStream::new(0, 0);
        let darts: Vec<Dart> = (0..50).map(|_| gen_point_dart(&dom, &mut rng)).collect();
        let e = estimate_mean(&Constant(3.0), &darts, &dom).unwrap();
        assert_eq!(e.mean, 3.0);
        assert_eq!(e.std_error, 0.0);
        assert_eq!(e.n, 50);
        assert_eq!(estimate_mean(&Constant(1.0), &[], &dom), Err(Error::EmptySample));
    }

    #[test]
    fn degenerate_flat_is_rejected() {
        let dom = BoxDomain::unit(2);
        let outside = Flat::Line2d(crate::flat::OrientedLine::from_angle([5.0, 5.0], 0.0));
        assert_eq!(flat_average(&outside, &Constant(1.0), &dom), Err(Error::DegenerateFlat));
    }

    #[test]
    fn grid_integration_examples() {
        let dom = BoxDomain::unit(2);
        let line = aligned(2, vec![1], vec![0.3]);
        let g = integrate_flat_grid(&line, |_| 1.0, &dom, 10).unwrap();
        assert!((g - 1.0).abs() < 1e-15);
        let g = integrate_flat_grid(&line, |x| x[0], &dom, 100).unwrap();
        assert!((g - 0.5).abs() < 1e-14);
        assert_eq!(
            integrate_flat_grid(&line, |_| 1.0, &dom, 1),
            Err(Error::InvalidResolution(1))
        );

        // chord of the unit sphere at distance 0.5 from the axis
        let sp = Sphere::unit(3);
        let chord = aligned(3, vec![0, 1], vec![0.5, 0.0]);
        let g = integrate_flat_grid(&chord, |x| sp.value_at(x), &BoxDomain::two_cube(3), 10_000)
            .unwrap();
        assert!((g / 3f64.sqrt() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn grid_converges_on_polynomials() {
        let dom = BoxDomain::unit(3);
        let plane = aligned(3, vec![1], vec![0.4]);
        // exact integral of x0^2 * x2^3 over the unit square is 1/12
        let f = |x: &[f64]| x[0] * x[0] * x[2].powi(3);
        let mut prev = f64::INFINITY;
        for res in [4, 8, 16, 32, 64] {
            let err = (integrate_flat_grid(&plane, f, &dom, res).unwrap() - 1.0 / 12.0).abs();
            assert!(err < prev);
            prev = err;
        }
    }

    #[test]
    fn grid_fallback_for_pointwise_integrands() {
        let dom = BoxDomain::two_cube(3);
        let sp = Sphere::unit(3);
        let indicator = Pointwise(|x: &[f64]| sp.value_at(x));
        let plane = aligned(3, vec![2], vec![0.0]);
        let h = flat_average(&plane, &indicator, &dom).unwrap();
        assert!((h - PI / 4.0).abs() < 1e-3);
    }

    #[test]
    fn std_error_quarters_with_four_times_n() {
        let dom = BoxDomain::two_cube(3);
        let sp = Sphere::unit(3);
        let ns = [100usize, 400, 1600];
        let mut se = Vec::new();
        for &n in &ns {
            // average the standard error over a few replications to tame noise
            let mut acc = 0.0;
            for rep in 0..20 {
                let mut rng = RngStream::keyed(17, &[n as u64, rep]);
                let e = flat_budget_estimate(&sp, &dom, DartKind::Aligned(0), Sampler::Mc, n, &mut rng)
                    .unwrap();
                acc += e.std_error;
            }
            se.push(acc / 20.0);
        }
        let x: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
        let slope = stats::loglog_slope(&x, &se);
        assert!((slope + 0.5).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn point_estimate_of_sphere_fraction() {
        let dom = BoxDomain::two_cube(3);
        let sp = Sphere::unit(3);
        let mut rng = RngStream::new(99, 0);
        let e = flat_budget_estimate(&sp, &dom, DartKind::Aligned(0), Sampler::Mc, 200_000, &mut rng)
            .unwrap();
        assert!((e.mean - PI / 6.0).abs() < 4.0 * e.std_error);
    }

    #[test]
    fn truncates_partial_darts() {
        let dom = BoxDomain::two_cube(3);
        let sp = Sphere::unit(3);
        let mut rng = RngStream::new(1, 0);
        let e = flat_budget_estimate(&sp, &dom, DartKind::Aligned(1), Sampler::Mc, 10, &mut rng)
            .unwrap();
        assert_eq!(e.n, 4);
        let e = flat_budget_estimate(&sp, &dom, DartKind::Aligned(2), Sampler::Lhs, 7, &mut rng)
            .unwrap();
        assert_eq!(e.n, 3);
    }

    #[test]
    fn lhs_rejected_for_unaligned() {
        let dom = BoxDomain::two_cube(2);
        let mut rng = RngStream::new(1, 0);
        assert!(flat_budget_estimate(
            &Sphere::unit(2),
            &dom,
            DartKind::RandomLine,
            Sampler::Lhs,
            10,
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn error_curve_orders_by_k() {
        let sp = Sphere::unit(3);
        let cfg = ErrorCurveConfig {
            object: &sp,
            true_volume: sp.volume(),
            domain: BoxDomain::two_cube(3),
            sampler: Sampler::Mc,
            kinds: vec![DartKind::Aligned(0), DartKind::Aligned(1), DartKind::Aligned(2), DartKind::Aligned(3)],
            n_list: vec![3000],
            reps: 100,
            seed: 5,
        };
        let rows = error_curve(&cfg).unwrap();
        assert!(rows[2].rms_rel < rows[1].rms_rel && rows[1].rms_rel < rows[0].rms_rel);
        assert!(rows[3].rms_rel < 1e-12);
        assert_eq!(rows[0].estimates.len(), 100);
    }
}
