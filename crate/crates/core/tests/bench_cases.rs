use std::f64::consts::PI;

use pim_core::assembly::symmetrizer;
use pim_core::bench::{
    coefficient, gauge_fixed_l2_error, solve_case, weighted_l2_error, BoundaryKind, CaseOptions, Geometry, TestCase,
};
use pim_core::PointCloud;

const H: f64 = 1e-4;

/// `−div(p² ∇u)` by nested central differences in the plane.
fn planar_forcing_fd(u: impl Fn(f64, f64) -> f64, x: f64, y: f64) -> f64 {
    let p2 = |x: f64, y: f64| coefficient(&[x, y]).powi(2);
    let fx = |x: f64, y: f64| p2(x, y) * (u(x + H, y) - u(x - H, y)) / (2.0 * H);
    let fy = |x: f64, y: f64| p2(x, y) * (u(x, y + H) - u(x, y - H)) / (2.0 * H);
    -((fx(x + H, y) - fx(x - H, y)) / (2.0 * H) + (fy(x, y + H) - fy(x, y - H)) / (2.0 * H))
}

/// `−div_S(p² ∇_S u)` on the unit sphere in polar/azimuthal coordinates.
fn sphere_forcing_fd(u: impl Fn(f64, f64) -> f64, th: f64, ph: f64) -> f64 {
    let point = |th: f64, ph: f64| [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
    let p2 = |th: f64, ph: f64| coefficient(&point(th, ph)).powi(2);
    let ft = |th: f64, ph: f64| th.sin() * p2(th, ph) * (u(th + H, ph) - u(th - H, ph)) / (2.0 * H);
    let fp = |th: f64, ph: f64| p2(th, ph) * (u(th, ph + H) - u(th, ph - H)) / (2.0 * H);
    let div = (ft(th + H, ph) - ft(th - H, ph)) / (2.0 * H) / th.sin()
        + (fp(th, ph + H) - fp(th, ph - H)) / (2.0 * H) / th.sin().powi(2);
    -div
}

#[test]
fn sampled_measures_match_the_geometry() {
    let cases = [(Geometry::Disk, PI), (Geometry::Annulus, 8.0 * PI), (Geometry::Cap, PI)];
    for (geometry, area) in cases {
        for n in [684, 2610] {
            let case = TestCase::new(geometry, n).unwrap();
            let total: f64 = case.cloud.volume().iter().sum();
            assert!((total / area - 1.0).abs() < 1e-6, "{geometry} {total}");
        }
    }
    let annulus = TestCase::new(Geometry::Annulus, 2610).unwrap();
    let boundary: f64 = annulus.cloud.area().iter().sum();
    assert!((boundary / (2.0 * PI * 4.0) - 1.0).abs() < 1e-6);
}

#[test]
fn disk_forcing_matches_finite_differences() {
    let case = TestCase::new(Geometry::Disk, 684).unwrap();
    let u = |x: f64, y: f64| (2.0 * PI * x.hypot(y)).cos();
    for (x, y) in [(0.5, 0.0), (0.3, -0.2), (-0.1, 0.85), (0.05, 0.02)] {
        let expected = planar_forcing_fd(u, x, y);
        let got = case.forcing(&[x, y]);
        assert!(
            (got - expected).abs() < 1e-5 * expected.abs().max(1.0),
            "{got} vs {expected}"
        );
    }
}

#[test]
fn annulus_forcing_matches_finite_differences() {
    let case = TestCase::new(Geometry::Annulus, 684).unwrap();
    let u = |x: f64, y: f64| (x + y).sin();
    for (x, y) in [(1.2, 0.4), (-2.0, 1.7), (0.0, -2.95), (2.1, 2.1)] {
        let expected = planar_forcing_fd(u, x, y);
        let got = case.forcing(&[x, y]);
        assert!(
            (got - expected).abs() < 1e-5 * expected.abs().max(1.0),
            "{got} vs {expected}"
        );
    }
}

#[test]
fn cap_forcing_matches_finite_differences() {
    let case = TestCase::new(Geometry::Cap, 1199).unwrap();
    let u = |th: f64, ph: f64| th.sin() * ph.cos() + th.sin() * ph.sin() + th.cos();
    for (th, ph) in [(0.3, 0.2), (0.9, 2.5), (1.0, -1.2), (0.6, 4.0)] {
        let expected = sphere_forcing_fd(u, th, ph);
        let x = [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
        let got = case.forcing(&x);
        assert!(
            (got - expected).abs() < 1e-5 * expected.abs().max(1.0),
            "{got} vs {expected}"
        );
    }
}

#[test]
fn error_norms() {
    let case = TestCase::new(Geometry::Disk, 684).unwrap();
    let exact = case.exact_values();
    assert_eq!(weighted_l2_error(&case.cloud, &exact, &exact).unwrap(), (0.0, 0.0));
    let shifted: Vec<f64> = exact.iter().map(|v| v + 4.0).collect();
    let d = symmetrizer(&case.cloud, &case.coefficient_values());
    let (abs, _) = gauge_fixed_l2_error(&case.cloud, &shifted, &exact, &d).unwrap();
    assert!(abs < 1e-12);

    let single = PointCloud::new(2, 2, vec![0.0, 0.0], vec![2.0], vec![], vec![]).unwrap();
    let (abs, rel) = weighted_l2_error(&single, &[3.0], &[0.0]).unwrap();
    assert!((abs - 3.0 * 2f64.sqrt()).abs() < 1e-15);
    assert_eq!(abs, rel);
}

#[test]
fn disk_neumann_error_has_the_reference_magnitude() {
    let case = TestCase::new(Geometry::Disk, 2610).unwrap();
    let r = solve_case(&case, &CaseOptions::new(BoundaryKind::Neumann)).unwrap();
    let reference = 0.214960;
    assert!(r.abs_l2 < 3.0 * reference && r.abs_l2 > reference / 3.0, "{}", r.abs_l2);
}

#[test]
fn annulus_dirichlet_error_has_the_reference_order_of_magnitude() {
    let case = TestCase::new(Geometry::Annulus, 2610).unwrap();
    let mut options = CaseOptions::new(BoundaryKind::Dirichlet);
    options.allow_unconverged = true;
    let r = solve_case(&case, &options).unwrap();
    let reference = 0.012227;
    assert!(
        r.abs_l2 < 10.0 * reference && r.abs_l2 > reference / 10.0,
        "{}",
        r.abs_l2
    );
}
