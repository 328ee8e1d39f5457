//! Error norms, single-case solves and convergence studies.

use super::TestCase;
use crate::assembly::{symmetrizer, Assembler, BoundaryCondition, ProblemSpec};
use crate::cloud::{select_bandwidth_global, Bandwidth, PointCloud};
use crate::error::{PimError, Result};
use crate::kernel::{KernelFamily, KernelSpec, DEFAULT_GAUSSIAN_TRUNCATION};
use crate::solve::{alm_iterations, solve_neumann, solve_robin, system_rhs, Solution, SolveOptions};
use std::fmt::Write as _;
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryKind {
    Neumann,
    /// Enforced by the augmented-Lagrangian loop.
    Dirichlet,
    /// `u + β ∂u/∂n = g` with `g` built from the exact solution.
    Robin(f64),
}

impl BoundaryKind {
    pub fn name(&self) -> &'static str {
        match self {
            BoundaryKind::Neumann => "neumann",
            BoundaryKind::Dirichlet => "dirichlet",
            BoundaryKind::Robin(_) => "robin",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CaseOptions {
    pub boundary: BoundaryKind,
    pub family: KernelFamily,
    /// Neighbor count for the mean k-NN radius bandwidth.
    pub knn: usize,
    pub truncation: f64,
    pub solve: SolveOptions,
    /// Report the last ALM iterate instead of failing when the outer loop stalls.
    pub allow_unconverged: bool,
}

impl CaseOptions {
    pub fn new(boundary: BoundaryKind) -> Self {
        Self {
            boundary,
            family: KernelFamily::Gaussian,
            knn: 10,
            truncation: DEFAULT_GAUSSIAN_TRUNCATION,
            solve: SolveOptions::default(),
            allow_unconverged: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub n: usize,
    pub t: f64,
    pub abs_l2: f64,
    pub rel_l2: f64,
    /// `abs_l2 / sqrt(Σ V)`, the root-mean-square error over the domain.
    pub rms_l2: f64,
    /// False only for an ALM run accepted through `allow_unconverged`.
    pub converged: bool,
    pub solution: Solution,
}

/// `(sqrt(Σ (u_i − e_i)² V_i), abs / sqrt(Σ e_i² V_i))`; `rel = abs` when `e = 0`.
pub fn weighted_l2_error(cloud: &PointCloud, u: &[f64], exact: &[f64]) -> Result<(f64, f64)> {
    let n = cloud.len();
    for (what, len) in [("solution", u.len()), ("exact values", exact.len())] {
        if len != n {
            return Err(PimError::Dimension {
                what,
                expected: n,
                got: len,
            });
        }
    }
    let v = cloud.volume();
    let abs = u
        .iter()
        .zip(exact)
        .zip(v)
        .map(|((u, e), v)| (u - e).powi(2) * v)
        .sum::<f64>()
        .sqrt();
    let norm = exact.iter().zip(v).map(|(e, v)| e * e * v).sum::<f64>().sqrt();
    Ok((abs, if norm > 0.0 { abs / norm } else { abs }))
}

/// As [`weighted_l2_error`] after removing the `weights`-mean of `u − exact`.
pub fn gauge_fixed_l2_error(cloud: &PointCloud, u: &[f64], exact: &[f64], weights: &[f64]) -> Result<(f64, f64)> {
    if weights.len() != u.len() || u.len() != exact.len() {
        return Err(PimError::Dimension {
            what: "gauge weights",
            expected: u.len(),
            got: weights.len(),
        });
    }
    let wsum: f64 = weights.iter().sum();
    let mean = u
        .iter()
        .zip(exact)
        .zip(weights)
        .map(|((u, e), w)| (u - e) * w)
        .sum::<f64>()
        / wsum;
    let shifted: Vec<f64> = u.iter().map(|u| u - mean).collect();
    weighted_l2_error(cloud, &shifted, exact)
}

/// Solves `problem` by the method its boundary condition calls for; the flag
/// is false only for an ALM run accepted through `allow_unconverged`.
pub fn solve_problem(
    asm: &Assembler,
    problem: &ProblemSpec,
    options: &SolveOptions,
    allow_unconverged: bool,
) -> Result<(Solution, bool)> {
    match problem.boundary {
        BoundaryCondition::Neumann(_) => {
            let bundle = asm.bundle(problem)?;
            let rhs = system_rhs(&bundle, &problem.f_vals)?;
            Ok((solve_neumann(&bundle, &rhs, options)?, true))
        }
        BoundaryCondition::Robin { .. } => {
            let bundle = asm.bundle(problem)?;
            let rhs = system_rhs(&bundle, &problem.f_vals)?;
            Ok((solve_robin(&bundle, &rhs, options)?, true))
        }
        BoundaryCondition::Dirichlet(_) => {
            let run = alm_iterations(asm, problem, options)?;
            if !run.converged && !allow_unconverged {
                return Err(PimError::AlmNotConverged {
                    history: run.solution.boundary_residual_history,
                });
            }
            Ok((run.solution, run.converged))
        }
    }
}

/// Solves one manufactured problem with the bandwidth `t = (mean k-NN radius)²`.
pub fn solve_case(case: &TestCase, options: &CaseOptions) -> Result<CaseResult> {
    let cloud = &case.cloud;
    let bandwidth = select_bandwidth_global(cloud, options.knn)?;
    let Bandwidth::Global(t) = bandwidth else {
        unreachable!()
    };
    let kernel = KernelSpec::new(options.family, bandwidth, cloud.intrinsic_dim()).with_truncation(options.truncation);
    let asm = Assembler::new(cloud, kernel)?;
    let problem = case.problem(options.boundary);
    let exact = case.exact_values();
    let (solution, converged) = solve_problem(&asm, &problem, &options.solve, options.allow_unconverged)?;
    let (abs_l2, rel_l2) = match options.boundary {
        BoundaryKind::Neumann => {
            gauge_fixed_l2_error(cloud, &solution.u, &exact, &symmetrizer(cloud, &problem.p_vals))?
        }
        _ => weighted_l2_error(cloud, &solution.u, &exact)?,
    };
    let measure: f64 = cloud.volume().iter().sum();
    Ok(CaseResult {
        n: cloud.len(),
        t,
        abs_l2,
        rel_l2,
        rms_l2: abs_l2 / measure.sqrt(),
        converged,
        solution,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub t: f64,
    pub abs_l2: f64,
    pub rel_l2: f64,
    pub rms_l2: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub geometry: String,
    pub boundary: String,
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log abs_l2` against `log N`.
    pub slope: f64,
}

impl ConvergenceReport {
    fn new(geometry: String, boundary: String, mut rows: Vec<ConvergenceRow>) -> Self {
        rows.sort_by_key(|r| r.n);
        let slope = if rows.len() >= 2 {
            fitted_slope(&rows.iter().map(|r| (r.n as f64, r.abs_l2)).collect::<Vec<_>>())
        } else {
            f64::NAN
        };
        Self {
            geometry,
            boundary,
            rows,
            slope,
        }
    }

    /// Ratios `err_k / err_{k+1}` between consecutive levels.
    pub fn ratios(&self) -> Vec<f64> {
        self.rows.windows(2).map(|w| w[0].abs_l2 / w[1].abs_l2).collect()
    }

    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut s = String::new();
        for c in comments {
            let _ = writeln!(s, "# {c}");
        }
        s.push_str("N,t,abs_l2,rel_l2\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{:.17e},{:.17e},{:.17e}", r.n, r.t, r.abs_l2, r.rel_l2);
        }
        let _ = writeln!(s, "# slope={:.6}", self.slope);
        s
    }

    pub fn write_csv<W: Write>(&self, comments: &[String], mut w: W) -> std::io::Result<()> {
        w.write_all(self.to_csv(comments).as_bytes())
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn fitted_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, thiserror::Error)]
#[error("convergence study stopped at N = {failed_n}: {source}")]
pub struct ConvergenceFailure {
    pub partial: ConvergenceReport,
    pub failed_n: usize,
    #[source]
    pub source: PimError,
}

/// Solves `make(N)` for every `N` in `n_list` (ascending, at least three levels).
pub fn run_convergence(
    make: impl Fn(usize) -> Result<TestCase>,
    n_list: &[usize],
    options: &CaseOptions,
) -> std::result::Result<ConvergenceReport, ConvergenceFailure> {
    let fail = |rows: Vec<ConvergenceRow>, geometry: String, n: usize, e: PimError| ConvergenceFailure {
        partial: ConvergenceReport::new(geometry, options.boundary.name().into(), rows),
        failed_n: n,
        source: e,
    };
    if n_list.len() < 3 || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(fail(
            Vec::new(),
            String::new(),
            0,
            PimError::Validation("N list must be strictly ascending with at least three levels".into()),
        ));
    }
    let mut rows = Vec::new();
    let mut geometry = String::new();
    for &n in n_list {
        let result = make(n).and_then(|case| {
            geometry = case.geometry.name().to_string();
            solve_case(&case, options)
        });
        match result {
            Ok(r) => rows.push(ConvergenceRow {
                n: r.n,
                t: r.t,
                abs_l2: r.abs_l2,
                rel_l2: r.rel_l2,
                rms_l2: r.rms_l2,
                converged: r.converged,
            }),
            Err(e) => return Err(fail(rows, geometry, n, e)),
        }
    }
    Ok(ConvergenceReport::new(geometry, options.boundary.name().into(), rows))
}
