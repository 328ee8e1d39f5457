//! Manufactured-solution problems on the disk, annulus and spherical cap,
//! error norms and convergence studies.

mod convergence;
mod samplers;

pub use convergence::{
    fitted_slope, gauge_fixed_l2_error, run_convergence, solve_case, solve_problem, weighted_l2_error, BoundaryKind,
    CaseOptions, CaseResult, ConvergenceFailure, ConvergenceReport, ConvergenceRow,
};
pub use samplers::{sample_annulus, sample_cap, sample_circle, sample_disk, sample_disk_random};

use crate::assembly::ProblemSpec;
use crate::cloud::PointCloud;
use crate::error::{PimError, Result};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

pub const ANNULUS_INNER: f64 = 1.0;
pub const ANNULUS_OUTER: f64 = 3.0;
pub const CAP_ANGLE: f64 = PI / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Geometry {
    /// Unit disk, `u = cos(2π|x|)`.
    Disk,
    /// Annulus `1 <= |x| <= 3`, `u = sin(x + y)`.
    Annulus,
    /// Unit-sphere cap with polar angle `<= π/3`, `u = x + y + z`.
    Cap,
}

impl Geometry {
    pub const ALL: [Geometry; 3] = [Geometry::Disk, Geometry::Annulus, Geometry::Cap];

    pub fn name(self) -> &'static str {
        match self {
            Geometry::Disk => "disk",
            Geometry::Annulus => "annulus",
            Geometry::Cap => "cap",
        }
    }

    /// Area of the manifold.
    pub fn measure(self) -> f64 {
        match self {
            Geometry::Disk => PI,
            Geometry::Annulus => PI * (ANNULUS_OUTER.powi(2) - ANNULUS_INNER.powi(2)),
            Geometry::Cap => 2.0 * PI * (1.0 - CAP_ANGLE.cos()),
        }
    }

    /// Length of the boundary.
    pub fn boundary_length(self) -> f64 {
        match self {
            Geometry::Disk => 2.0 * PI,
            Geometry::Annulus => 2.0 * PI * (ANNULUS_INNER + ANNULUS_OUTER),
            Geometry::Cap => 2.0 * PI * CAP_ANGLE.sin(),
        }
    }

    pub fn sample(self, n: usize) -> Result<PointCloud> {
        match self {
            Geometry::Disk => sample_disk(n),
            Geometry::Annulus => sample_annulus(n, ANNULUS_INNER, ANNULUS_OUTER),
            Geometry::Cap => sample_cap(n, CAP_ANGLE),
        }
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Geometry {
    type Err = PimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "disk" => Ok(Geometry::Disk),
            "annulus" => Ok(Geometry::Annulus),
            "cap" => Ok(Geometry::Cap),
            other => Err(PimError::Validation(format!(
                "unknown geometry '{other}' (disk, annulus, cap)"
            ))),
        }
    }
}

/// Coefficient `p = 1 + |x|²/4`, shared by all three problems.
pub fn coefficient(x: &[f64]) -> f64 {
    1.0 + 0.25 * x.iter().map(|v| v * v).sum::<f64>()
}

/// A manufactured problem together with its sampled cloud.
#[derive(Debug, Clone)]
pub struct TestCase {
    pub name: String,
    pub geometry: Geometry,
    pub cloud: PointCloud,
}

pub fn make_disk(n: usize) -> Result<TestCase> {
    TestCase::new(Geometry::Disk, n)
}

pub fn make_annulus(n: usize) -> Result<TestCase> {
    TestCase::new(Geometry::Annulus, n)
}

pub fn make_cap(n: usize) -> Result<TestCase> {
    TestCase::new(Geometry::Cap, n)
}

/// Closed-form `f = −div(p² ∇u)` for the test problem at `x`.
pub fn derive_forcing(test: &TestCase, x: &[f64]) -> f64 {
    forcing(test.geometry, x)
}

fn forcing(geometry: Geometry, x: &[f64]) -> f64 {
    let p = coefficient(x);
    match geometry {
        Geometry::Disk => {
            let r = x[0].hypot(x[1]);
            let k = 2.0 * PI;
            let du = -k * (k * r).sin();
            let d2u = -k * k * (k * r).cos();
            // u'' + u'/r, with its limit at the center
            let lap = if r < 1e-8 { -2.0 * k * k } else { d2u + du / r };
            -(p * p * lap + p * r * du)
        }
        Geometry::Annulus => {
            let s = x[0] + x[1];
            -(p * s * s.cos() - 2.0 * p * p * s.sin())
        }
        Geometry::Cap => 2.0 * p * p * (x[0] + x[1] + x[2]),
    }
}

impl TestCase {
    /// Samples the geometry at about `n` points and checks the closed-form
    /// forcing and boundary flux against finite differences of `u` and `p`.
    pub fn new(geometry: Geometry, n: usize) -> Result<Self> {
        let cloud = geometry.sample(n)?;
        let case = Self {
            name: format!("{}-{}", geometry.name(), cloud.len()),
            geometry,
            cloud,
        };
        case.check_consistency()?;
        Ok(case)
    }

    /// Attaches the manufactured problem of `geometry` to an externally sampled cloud.
    pub fn with_cloud(geometry: Geometry, cloud: PointCloud) -> Result<Self> {
        let case = Self {
            name: format!("{}-{}", geometry.name(), cloud.len()),
            geometry,
            cloud,
        };
        case.check_consistency()?;
        Ok(case)
    }

    pub fn exact(&self, x: &[f64]) -> f64 {
        match self.geometry {
            Geometry::Disk => (2.0 * PI * x[0].hypot(x[1])).cos(),
            Geometry::Annulus => (x[0] + x[1]).sin(),
            Geometry::Cap => x[0] + x[1] + x[2],
        }
    }

    pub fn coefficient(&self, x: &[f64]) -> f64 {
        coefficient(x)
    }

    pub fn forcing(&self, x: &[f64]) -> f64 {
        forcing(self.geometry, x)
    }

    /// Outward conormal at a boundary point.
    pub fn conormal(&self, x: &[f64]) -> Vec<f64> {
        match self.geometry {
            Geometry::Disk => {
                let r = x[0].hypot(x[1]);
                vec![x[0] / r, x[1] / r]
            }
            Geometry::Annulus => {
                let r = x[0].hypot(x[1]);
                let s = if r < 0.5 * (ANNULUS_INNER + ANNULUS_OUTER) {
                    -1.0
                } else {
                    1.0
                };
                vec![s * x[0] / r, s * x[1] / r]
            }
            Geometry::Cap => {
                let rho = x[0].hypot(x[1]);
                vec![x[2] * x[0] / rho, x[2] * x[1] / rho, -rho]
            }
        }
    }

    /// Closed-form `∂u/∂n` at a boundary point.
    pub fn flux(&self, x: &[f64]) -> f64 {
        match self.geometry {
            Geometry::Disk => {
                let r = x[0].hypot(x[1]);
                -2.0 * PI * (2.0 * PI * r).sin()
            }
            Geometry::Annulus => {
                let n = self.conormal(x);
                (x[0] + x[1]).cos() * (n[0] + n[1])
            }
            Geometry::Cap => self.conormal(x).iter().sum(),
        }
    }

    pub fn exact_values(&self) -> Vec<f64> {
        self.cloud.points().map(|x| self.exact(x)).collect()
    }

    pub fn coefficient_values(&self) -> Vec<f64> {
        self.cloud.points().map(coefficient).collect()
    }

    pub fn forcing_values(&self) -> Vec<f64> {
        self.cloud.points().map(|x| self.forcing(x)).collect()
    }

    pub fn flux_values(&self) -> Vec<f64> {
        self.cloud
            .boundary_ids()
            .iter()
            .map(|&i| self.flux(self.cloud.point(i)))
            .collect()
    }

    pub fn dirichlet_values(&self) -> Vec<f64> {
        self.cloud
            .boundary_ids()
            .iter()
            .map(|&i| self.exact(self.cloud.point(i)))
            .collect()
    }

    pub fn problem(&self, boundary: BoundaryKind) -> ProblemSpec {
        let (p, f) = (self.coefficient_values(), self.forcing_values());
        match boundary {
            BoundaryKind::Neumann => ProblemSpec::neumann(p, f, self.flux_values()),
            BoundaryKind::Dirichlet => ProblemSpec::dirichlet(p, f, self.dirichlet_values()),
            BoundaryKind::Robin(beta) => {
                // u + β ∂u/∂n = g
                let g = self
                    .dirichlet_values()
                    .iter()
                    .zip(self.flux_values())
                    .map(|(u, b)| u + beta * b)
                    .collect();
                ProblemSpec::robin(p, f, g, beta)
            }
        }
    }

    /// Maps local parameters to a point on the manifold.
    fn embed(&self, a: f64, b: f64) -> Vec<f64> {
        match self.geometry {
            Geometry::Disk | Geometry::Annulus => vec![a, b],
            Geometry::Cap => vec![a.sin() * b.cos(), a.sin() * b.sin(), a.cos()],
        }
    }

    /// `−div(p² ∇u)` by Richardson-extrapolated conservative differences in local parameters.
    fn forcing_fd(&self, a: f64, b: f64) -> f64 {
        let u = |a: f64, b: f64| self.exact(&self.embed(a, b));
        let pp = |a: f64, b: f64| coefficient(&self.embed(a, b)).powi(2);
        let sphere = self.geometry == Geometry::Cap;
        let op = |h: f64| {
            // metric factors for (θ, φ) on the unit sphere; identity for (x, y)
            let ga = |a: f64| if sphere { a.sin() } else { 1.0 };
            let gb = |a: f64| if sphere { 1.0 / a.sin() } else { 1.0 };
            let jac = if sphere { a.sin() } else { 1.0 };
            let fa = |s: f64| ga(a + s * h / 2.0) * pp(a + s * h / 2.0, b) * (u(a + s * h, b) - u(a, b));
            let fb = |s: f64| gb(a) * pp(a, b + s * h / 2.0) * (u(a, b + s * h) - u(a, b));
            -(fa(1.0) + fa(-1.0) + fb(1.0) + fb(-1.0)) / (h * h * jac)
        };
        let h = 2e-3;
        (4.0 * op(h / 2.0) - op(h)) / 3.0
    }

    fn check_consistency(&self) -> Result<()> {
        let probes: Vec<(f64, f64)> = match self.geometry {
            Geometry::Disk => (0..12)
                .map(|k| (0.07 * k as f64 - 0.4, 0.05 * k as f64 - 0.3))
                .collect(),
            Geometry::Annulus => (0..12)
                .map(|k| {
                    let (r, a) = (1.1 + 0.16 * k as f64, 0.5 * k as f64);
                    (r * a.cos(), r * a.sin())
                })
                .collect(),
            Geometry::Cap => (0..12).map(|k| (0.1 + 0.08 * k as f64, 0.5 * k as f64)).collect(),
        };
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for &(a, b) in &probes {
            let x = self.embed(a, b);
            let f = self.forcing(&x);
            scale = scale.max(f.abs());
            worst = worst.max((f - self.forcing_fd(a, b)).abs());
        }
        if worst > 1e-6 * scale.max(1.0) {
            return Err(PimError::Numeric(format!(
                "{}: closed-form forcing disagrees with finite differences by {worst:e}",
                self.name
            )));
        }
        let h = 1e-4;
        for &i in self.cloud.boundary_ids().iter().step_by(7) {
            let x = self.cloud.point(i);
            let fd = match self.geometry {
                Geometry::Cap => {
                    let (th, ph) = (x[0].hypot(x[1]).atan2(x[2]), x[1].atan2(x[0]));
                    (self.exact(&self.embed(th + h, ph)) - self.exact(&self.embed(th - h, ph))) / (2.0 * h)
                }
                _ => {
                    let n = self.conormal(x);
                    let shifted = |s: f64| [x[0] + s * h * n[0], x[1] + s * h * n[1]];
                    (self.exact(&shifted(1.0)) - self.exact(&shifted(-1.0))) / (2.0 * h)
                }
            };
            let b = self.flux(x);
            if (fd - b).abs() > 1e-6 * b.abs().max(1.0) {
                return Err(PimError::Numeric(format!(
                    "{}: boundary flux {b} disagrees with finite difference {fd} at point {i}",
                    self.name
                )));
            }
        }
        Ok(())
    }
}
