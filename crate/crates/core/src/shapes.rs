//! Analytic test objects: balls and squished, rotated ellipsoids.
//!
//! An [`Ellipsoid`] is the image of the unit ball under `x = R S y`, where `S`
//! is a diagonal squish and `R` a product of Givens rotations. Membership and
//! flat intersections are computed by mapping back to the unit ball, where the
//! section of a `k`-flat at distance `t` from the origin is a `k`-ball of
//! radius `sqrt(1 - t^2)`, and scaling the result forward again.

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::estimator::FlatIntegrable;
use crate::flat::{clipped_flat_measure, AlignedFlat, Flat, OrientedLine};
use crate::rng::RngStream;

/// Relative pivot threshold used when orthonormalising back-projected spans.
const PIVOT_TOL: f64 = 1e-12;

/// Volume of the `k`-ball of the given radius; `1` for `k = 0`.
pub fn ball_volume(k: usize, radius: f64) -> f64 {
    // V_k = V_{k-2} * 2 pi / k
    let mut v = if k % 2 == 0 { 1.0 } else { 2.0 };
    let mut j = if k % 2 == 0 { 2 } else { 3 };
    while j <= k {
        v *= 2.0 * std::f64::consts::PI / j as f64;
        j += 2;
    }
    v * radius.powi(k as i32)
}

/// Rotation by `theta` in the `(i, j)` coordinate plane, `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Givens {
    pub i: usize,
    pub j: usize,
    pub theta: f64,
}

impl Givens {
    #[inline]
    fn apply(&self, x: &mut [f64], sign: f64) {
        let (s, c) = (sign * self.theta).sin_cos();
        let (a, b) = (x[self.i], x[self.j]);
        x[self.i] = c * a - s * b;
        x[self.j] = s * a + c * b;
    }

    /// Forward rotation in place.
    pub fn rotate(&self, x: &mut [f64]) {
        self.apply(x, 1.0)
    }

    /// Inverse rotation in place.
    pub fn unrotate(&self, x: &mut [f64]) {
        self.apply(x, -1.0)
    }
}

/// Ball of a given radius and centre.
#[derive(Debug, Clone, PartialEq)]
pub struct Sphere {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Sphere {
    pub fn unit(d: usize) -> Self {
        Self {
            center: vec![0.0; d],
            radius: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn volume(&self) -> f64 {
        ball_volume(self.dim(), self.radius)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let r2: f64 = x
            .iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum();
        r2 < self.radius * self.radius
    }

    /// `k`-volume of the intersection of an unclipped flat with the ball.
    pub fn section_measure(&self, flat: &Flat) -> f64 {
        let (rho2, k) = match flat {
            Flat::Aligned(f) => {
                let rho2 = f
                    .fixed_idx()
                    .iter()
                    .zip(f.fixed_val())
                    .map(|(&i, v)| (v - self.center[i]).powi(2))
                    .sum::<f64>();
                (rho2, f.k())
            }
            Flat::Line2d(l) => {
                let w = [l.anchor[0] - self.center[0], l.anchor[1] - self.center[1]];
                let cross = w[0] * l.direction[1] - w[1] * l.direction[0];
                (cross * cross, 1)
            }
        };
        let r2 = self.radius * self.radius;
        if rho2 >= r2 {
            return 0.0;
        }
        ball_volume(k, (r2 - rho2).sqrt())
    }
}

/// Fraction of the clipped flat inside a ball that lies within the domain.
pub fn flat_fraction_sphere(flat: &Flat, sphere: &Sphere, domain: &BoxDomain) -> Result<f64> {
    let measure = clipped_flat_measure(flat, domain);
    if measure <= 0.0 {
        return Err(Error::DegenerateFlat);
    }
    Ok(sphere.section_measure(flat) / measure)
}

/// Unit ball squished along the first axis and rotated.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    s: f64,
    /// Diagonal of the squish map, per axis.
    scale: Vec<f64>,
    rotations: Vec<Givens>,
}

/// Squish and rotate the unit `d`-ball.
///
/// For `s <= 1` the first axis is scaled by `s`; for `s > 1` the other axes are
/// scaled by `1/s` so the result still fits in the two-cube. Then `r` Givens
/// rotations with random coordinate pairs and angles in `[0, pi)` are applied.
pub fn make_ellipsoid(d: usize, s: f64, r: usize, rng: &mut RngStream) -> Result<Ellipsoid> {
    if d < 2 {
        return Err(Error::UnsupportedDimension(format!(
            "ellipsoids need d >= 2, got d = {d}"
        )));
    }
    let rotations = (0..r)
        .map(|_| {
            let a = rng.below(d);
            let mut b = rng.below(d - 1);
            if b >= a {
                b += 1;
            }
            Givens {
                i: a.min(b),
                j: a.max(b),
                theta: rng.uniform_in(0.0, std::f64::consts::PI),
            }
        })
        .collect();
    Ellipsoid::new(d, s, rotations)
}

impl Ellipsoid {
    pub fn new(d: usize, s: f64, rotations: Vec<Givens>) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InvalidSquish(s));
        }
        if d == 0 {
            return Err(Error::UnsupportedDimension("d = 0".into()));
        }
        if let Some(g) = rotations.iter().find(|g| !(g.i < g.j && g.j < d)) {
            return Err(Error::InvalidConfig(format!(
                "rotation plane ({}, {}) invalid for d = {d}",
                g.i, g.j
            )));
        }
        let scale = if s <= 1.0 {
            let mut v = vec![1.0; d];
            v[0] = s;
            v
        } else {
            let mut v = vec![1.0 / s; d];
            v[0] = 1.0;
            v
        };
        Ok(Self {
            s,
            scale,
            rotations,
        })
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    pub fn squish(&self) -> f64 {
        self.s
    }

    /// Semi-axis lengths before rotation.
    pub fn semi_axes(&self) -> &[f64] {
        &self.scale
    }

    pub fn rotations(&self) -> &[Givens] {
        &self.rotations
    }

    /// Exact volume; rotations do not change it.
    pub fn true_volume(&self) -> f64 {
        let d = self.dim();
        let unit = ball_volume(d, 1.0);
        if self.s <= 1.0 {
            unit * self.s
        } else {
            unit * self.s.powi(-(d as i32 - 1))
        }
    }

    /// Map a vector to unit-ball coordinates: inverse rotations in reverse
    /// order, then inverse squish.
    pub fn back_project(&self, x: &mut [f64]) {
        for g in self.rotations.iter().rev() {
            g.unrotate(x);
        }
        for (v, s) in x.iter_mut().zip(&self.scale) {
            *v /= s;
        }
    }

    /// Inverse of [`Ellipsoid::back_project`].
    pub fn forward(&self, y: &mut [f64]) {
        for (v, s) in y.iter_mut().zip(&self.scale) {
            *v *= s;
        }
        for g in &self.rotations {
            g.rotate(y);
        }
    }

    pub fn point_inside(&self, x: &[f64]) -> bool {
        let mut y = x.to_vec();
        self.back_project(&mut y);
        y.iter().map(|v| v * v).sum::<f64>() < 1.0
    }

    /// `k`-volume of the intersection of an unclipped flat with the ellipsoid.
    pub fn section_measure(&self, flat: &Flat) -> Result<f64> {
        match flat {
            Flat::Aligned(f) if f.k() == 0 => {
                Ok(if self.point_inside(f.fixed_val()) { 1.0 } else { 0.0 })
            }
            Flat::Aligned(f) => self.aligned_section(f),
            Flat::Line2d(l) => self.line_section(l),
        }
    }

    fn aligned_section(&self, f: &AlignedFlat) -> Result<f64> {
        let d = self.dim();
        let free = f.free_axes();
        let k = free.len();

        // spanning points: p0 has zero free coordinates, p_i adds e_{free_i}
        let mut anchor = vec![0.0; d];
        for (&i, &v) in f.fixed_idx().iter().zip(f.fixed_val()) {
            anchor[i] = v;
        }
        self.back_project(&mut anchor);

        let mut basis: Vec<Vec<f64>> = free
            .iter()
            .map(|&axis| {
                let mut e = vec![0.0; d];
                e[axis] = 1.0;
                self.back_project(&mut e);
                e
            })
            .collect();
        self.section_from_span(&anchor, &mut basis, k)
    }

    fn line_section(&self, l: &OrientedLine) -> Result<f64> {
        if self.dim() != 2 {
            return Err(Error::UnsupportedDimension(
                "oriented lines need a planar ellipsoid".into(),
            ));
        }
        let mut anchor = l.anchor.to_vec();
        self.back_project(&mut anchor);
        let mut dir = l.direction.to_vec();
        self.back_project(&mut dir);
        let mut basis = vec![dir];
        self.section_from_span(&anchor, &mut basis, 1)
    }

    /// `anchor` and `basis` are in unit-ball coordinates; `basis` is consumed
    /// as scratch for its orthonormalisation.
    fn section_from_span(&self, anchor: &[f64], basis: &mut [Vec<f64>], k: usize) -> Result<f64> {
        let scale_ref = basis
            .iter()
            .map(|b| norm(b))
            .fold(0.0_f64, f64::max)
            .max(1.0);
        orthonormalize(basis, PIVOT_TOL * scale_ref).ok_or(Error::SingularFlat { k })?;

        // distance from the origin to the back-projected flat
        let mut t2 = dot(anchor, anchor);
        for q in basis.iter() {
            let c = dot(anchor, q);
            t2 -= c * c;
        }
        let t2 = t2.max(0.0);
        if t2 >= 1.0 {
            return Ok(0.0);
        }
        let sub = ball_volume(k, (1.0 - t2).sqrt());

        // k-volume scale of the forward map restricted to the span; the
        // rotations are isometries so only the squish contributes
        let mut images: Vec<Vec<f64>> = basis
            .iter()
            .map(|q| q.iter().zip(&self.scale).map(|(a, s)| a * s).collect())
            .collect();
        let jac = gram_volume(&mut images);
        Ok(sub * jac)
    }
}

/// Fraction of a clipped flat that lies inside the ellipsoid.
pub fn flat_fraction(flat: &Flat, e: &Ellipsoid, domain: &BoxDomain) -> Result<f64> {
    let measure = clipped_flat_measure(flat, domain);
    if measure <= 0.0 {
        return Err(Error::DegenerateFlat);
    }
    Ok(e.section_measure(flat)? / measure)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Modified Gram-Schmidt in place. Returns the pivot norms, or `None` when a
/// pivot falls below `tol`.
fn orthonormalize(vs: &mut [Vec<f64>], tol: f64) -> Option<Vec<f64>> {
    let mut pivots = Vec::with_capacity(vs.len());
    for i in 0..vs.len() {
        let (done, rest) = vs.split_at_mut(i);
        let v = &mut rest[0];
        for q in done.iter() {
            let c = dot(v, q);
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
        }
        let n = norm(v);
        if !(n > tol) {
            return None;
        }
        v.iter_mut().for_each(|a| *a /= n);
        pivots.push(n);
    }
    Some(pivots)
}

/// `sqrt(det(M^T M))` for the columns `vs`, via Gram-Schmidt pivots.
fn gram_volume(vs: &mut [Vec<f64>]) -> f64 {
    match orthonormalize(vs, 0.0) {
        Some(p) => p.iter().product(),
        None => 0.0,
    }
}

impl FlatIntegrable for Sphere {
    fn value_at(&self, x: &[f64]) -> f64 {
        if self.contains(x) {
            1.0
        } else {
            0.0
        }
    }

    fn flat_integral(&self, flat: &Flat) -> Option<Result<f64>> {
        Some(Ok(match flat {
            Flat::Aligned(f) if f.k() == 0 => self.value_at(f.fixed_val()),
            _ => self.section_measure(flat),
        }))
    }
}

impl FlatIntegrable for Ellipsoid {
    fn value_at(&self, x: &[f64]) -> f64 {
        if self.point_inside(x) {
            1.0
        } else {
            0.0
        }
    }

    fn flat_integral(&self, flat: &Flat) -> Option<Result<f64>> {
        Some(self.section_measure(flat))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flat::gen_aligned_dart;
    use std::f64::consts::PI;

    fn aligned(d: usize, idx: Vec<usize>, val: Vec<f64>) -> Flat {
        Flat::Aligned(AlignedFlat::new(d, idx, val).unwrap())
    }

    #[test]
    fn ball_volumes() {
        assert_eq!(ball_volume(0, 5.0), 1.0);
        assert_eq!(ball_volume(1, 0.5), 1.0);
        assert!((ball_volume(2, 2.0) - 4.0 * PI).abs() < 1e-12);
        assert!((ball_volume(3, 1.0) - 4.0 * PI / 3.0).abs() < 1e-12);
        assert!((ball_volume(10, 1.0) - PI.powi(5) / 120.0).abs() < 1e-12);
        assert!((ball_volume(10, 1.0) - 2.5502).abs() < 1e-4);
    }

    #[test]
    fn identity_ellipsoid_is_unit_ball() {
        let mut rng = RngStream::new(0, 0);
        let e = make_ellipsoid(3, 1.0, 0, &mut rng).unwrap();
        assert_eq!(e.semi_axes(), &[1.0, 1.0, 1.0]);
        assert!((e.true_volume() - 4.0 * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn squish_semi_axes() {
        let mut rng = RngStream::new(0, 0);
        assert_eq!(make_ellipsoid(2, 0.5, 0, &mut rng).unwrap().semi_axes(), &[0.5, 1.0]);
        assert_eq!(make_ellipsoid(2, 2.0, 0, &mut rng).unwrap().semi_axes(), &[1.0, 0.5]);
    }

    #[test]
    fn invalid_squish() {
        let mut rng = RngStream::new(0, 0);
        assert_eq!(make_ellipsoid(2, 0.0, 0, &mut rng), Err(Error::InvalidSquish(0.0)));
        assert!(make_ellipsoid(2, -1.0, 3, &mut rng).is_err());
    }

    #[test]
    fn true_volumes() {
        let mut rng = RngStream::new(0, 0);
        let v = |d, s, rng: &mut RngStream| make_ellipsoid(d, s, 0, rng).unwrap().true_volume();
        assert!((v(2, 1.0, &mut rng) - PI).abs() < 1e-12);
        assert!((v(2, 0.5, &mut rng) - PI / 2.0).abs() < 1e-12);
        assert!((v(2, 2.0, &mut rng) - PI / 2.0).abs() < 1e-12);
        let a = v(10, 0.5, &mut rng);
        let b = v(10, 2f64.powf(1.0 / 9.0), &mut rng);
        assert!((a - b).abs() < 1e-12 * a);
        let rotated = make_ellipsoid(10, 0.5, 20, &mut rng).unwrap().true_volume();
        assert_eq!(rotated, a);
    }

    #[test]
    fn forward_inverts_back_projection() {
        let mut rng = RngStream::new(2, 0);
        let e = make_ellipsoid(5, 0.3, 12, &mut rng).unwrap();
        let x = [0.1, -0.4, 0.7, 0.2, -0.9];
        let mut y = x;
        e.back_project(&mut y);
        e.forward(&mut y);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn membership_basics() {
        let mut rng = RngStream::new(3, 0);
        for s in [0.1, 0.5, 1.0] {
            let e = make_ellipsoid(3, s, 10, &mut rng).unwrap();
            assert!(e.point_inside(&[0.0, 0.0, 0.0]));
            assert!(!e.point_inside(&[1.0 + 1e-9, 0.0, 0.0]));
        }
    }

    #[test]
    fn sections_of_unit_ball() {
        let mut rng = RngStream::new(0, 0);
        let e = make_ellipsoid(3, 1.0, 0, &mut rng).unwrap();
        let dom = BoxDomain::two_cube(3);
        let line = aligned(3, vec![0, 1], vec![0.0, 0.0]);
        assert!((flat_fraction(&line, &e, &dom).unwrap() - 1.0).abs() < 1e-12);
        let plane = aligned(3, vec![2], vec![0.6]);
        let f = flat_fraction(&plane, &e, &dom).unwrap();
        assert!((f - 0.16 * PI).abs() < 1e-12);
        let miss = aligned(3, vec![0, 1], vec![0.8, 0.7]);
        assert_eq!(flat_fraction(&miss, &e, &dom).unwrap(), 0.0);
    }

    #[test]
    fn full_dimensional_flat_is_exact() {
        let mut rng = RngStream::new(5, 0);
        for (d, s) in [(2, 0.1), (3, 10f64.sqrt()), (4, 0.5)] {
            let e = make_ellipsoid(d, s, 10, &mut rng).unwrap();
            let dom = BoxDomain::two_cube(d);
            let dart = gen_aligned_dart(&dom, d, &mut rng).unwrap();
            let est = flat_fraction(&dart.flats[0], &e, &dom).unwrap() * dom.volume();
            assert!((est / e.true_volume() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn axis_line_through_squished_ellipse() {
        // semi-axes (0.5, 1): the x-axis chord has length 1, the y-axis chord 2
        let mut rng = RngStream::new(0, 0);
        let e = make_ellipsoid(2, 0.5, 0, &mut rng).unwrap();
        let along_x = aligned(2, vec![1], vec![0.0]);
        let along_y = aligned(2, vec![0], vec![0.0]);
        assert!((e.section_measure(&along_x).unwrap() - 1.0).abs() < 1e-12);
        assert!((e.section_measure(&along_y).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn oriented_line_matches_aligned() {
        let mut rng = RngStream::new(7, 0);
        let e = make_ellipsoid(2, 0.3, 5, &mut rng).unwrap();
        let aligned_line = aligned(2, vec![1], vec![0.1]);
        let oriented = Flat::Line2d(OrientedLine::from_angle([0.4, 0.1], 0.0));
        let a = e.section_measure(&aligned_line).unwrap();
        let b = e.section_measure(&oriented).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn sphere_fractions() {
        let dom = BoxDomain::two_cube(3);
        let sp = Sphere::unit(3);
        let pt = Flat::Aligned(AlignedFlat::point(vec![0.5, 0.0, 0.0]));
        assert_eq!(flat_fraction_sphere(&pt, &sp, &dom).unwrap(), 1.0);
        let far = aligned(3, vec![0, 1], vec![1.0, 0.0]);
        assert_eq!(flat_fraction_sphere(&far, &sp, &dom).unwrap(), 0.0);
        let chord = aligned(3, vec![0, 1], vec![0.8, 0.0]);
        assert!((flat_fraction_sphere(&chord, &sp, &dom).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn gram_volume_of_scaled_axes() {
        let mut vs = vec![vec![2.0, 0.0, 0.0], vec![1.0, 3.0, 0.0]];
        assert!((gram_volume(&mut vs) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn singular_span_detected() {
        let mut vs = vec![vec![1.0, 0.0], vec![2.0, 0.0]];
        assert!(orthonormalize(&mut vs, 1e-12).is_none());
    }
}
