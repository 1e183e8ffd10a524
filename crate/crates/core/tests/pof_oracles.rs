use kdarts::pof::{
    estimate_pof, failure_probability, replicate, speedup_experiment, FailureSpec, ResponseSurface, SpeedupConfig,
    SurfaceKind,
};
use kdarts::RngStream;

fn spec(kind: SurfaceKind, d: usize, pf: f64) -> FailureSpec {
    FailureSpec::calibrated(ResponseSurface::new(kind, d).unwrap(), pf).unwrap()
}

#[test]
fn pooled_line_estimates_reproduce_target() {
    for kind in [SurfaceKind::CircularParabola, SurfaceKind::PlanarCross] {
        let s = spec(kind, 3, 1e-5);
        let mut rng = RngStream::new(1, kind as u64);
        let e = estimate_pof(&s, 1, 100_000_000, &mut rng).unwrap();
        assert!((e.mean / 1e-5 - 1.0).abs() < 0.1, "{kind}: {}", e.mean);
    }
}

#[test]
fn parabola_threshold_is_exact() {
    for d in 2..=6 {
        let s = spec(SurfaceKind::CircularParabola, d, 1e-5);
        let p = failure_probability(&s.surface, s.y_t).unwrap();
        assert!((p / 1e-5 - 1.0).abs() < 1e-12);
    }
}

#[test]
fn line_darts_beat_points_by_three() {
    let s = spec(SurfaceKind::CircularParabola, 3, 1e-5);
    let line = replicate(&s, 1, 1_000_000, 100, 2).unwrap();
    let point = replicate(&s, 0, 1_000_000, 100, 2).unwrap();
    assert!((line.mean() / 1e-5 - 1.0).abs() < 0.1);
    assert!(point.rms_rel(1e-5) >= 3.0 * line.rms_rel(1e-5));
}

#[test]
fn estimates_stay_in_unit_interval() {
    let mut rng = RngStream::new(3, 0);
    for kind in [SurfaceKind::CircularParabola, SurfaceKind::PlanarCross] {
        for d in [2usize, 5] {
            let s = spec(kind, d, 0.01);
            for k in [0, 1] {
                let e = estimate_pof(&s, k, 10_000, &mut rng).unwrap();
                assert!((0.0..=1.0).contains(&e.mean));
            }
        }
    }
}

#[test]
fn planar_speedup_exceeds_one() {
    let rows = speedup_experiment(&SpeedupConfig {
        surfaces: vec![SurfaceKind::CircularParabola],
        dims: vec![2],
        pfs: vec![1e-4],
        reps: 10,
        target_rms: 0.1,
        n_start: 1000,
        seed: 4,
        ..SpeedupConfig::default()
    })
    .unwrap();
    assert!(rows[0].speedup.unwrap() > 1.0, "{rows:?}");
}
