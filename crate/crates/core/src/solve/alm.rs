//! Augmented-Lagrangian loop for Dirichlet data: a sequence of Robin solves
//! with data `g + β w`, followed by `w ← w + (g − v|_S)/β`.

use super::{GeneralSolver, Solution, SolveOptions};
use crate::assembly::{Assembler, BoundaryCondition, ProblemSpec};
use crate::cloud::PointCloud;
use crate::error::{PimError, Result};
use crate::kernel::KernelSpec;
use crate::sparse::CsrMatrix;

pub fn solve_dirichlet_alm(
    cloud: &PointCloud,
    kernel: &KernelSpec,
    problem: &ProblemSpec,
    options: &SolveOptions,
) -> Result<Solution> {
    let asm = Assembler::new(cloud, kernel.clone())?;
    solve_dirichlet_alm_with(&asm, problem, options)
}

/// As [`solve_dirichlet_alm`], reusing an existing assembler.
pub fn solve_dirichlet_alm_with(
    asm: &Assembler<'_>,
    problem: &ProblemSpec,
    options: &SolveOptions,
) -> Result<Solution> {
    let run = alm_iterations(asm, problem, options)?;
    if run.converged {
        Ok(run.solution)
    } else {
        Err(PimError::AlmNotConverged {
            history: run.solution.boundary_residual_history,
        })
    }
}

/// Outcome of the outer loop whether or not the boundary tolerance was met.
#[derive(Debug, Clone)]
pub struct AlmRun {
    /// Last iterate; on non-convergence this is `v` after `alm_max_outer` steps.
    pub solution: Solution,
    pub converged: bool,
}

/// Runs the outer loop; only inner solve failures are errors.
pub fn alm_iterations(asm: &Assembler<'_>, problem: &ProblemSpec, options: &SolveOptions) -> Result<AlmRun> {
    options.validate()?;
    let cloud = asm.cloud();
    problem.validate(cloud)?;
    let BoundaryCondition::Dirichlet(g) = &problem.boundary else {
        return Err(PimError::Validation("ALM needs Dirichlet boundary data".into()));
    };
    if cloud.num_boundary() == 0 {
        return Err(PimError::Validation("ALM needs a nonempty boundary".into()));
    }
    let beta = options.alm_beta;
    let p = &problem.p_vals;
    let (stiffness, _) = asm.stiffness(p)?;
    let mass = asm.mass(p)?;
    let (b, _) = asm.robin(p, &vec![0.0; g.len()], beta)?;
    let a = CsrMatrix::linear_combination(1.0, &stiffness, 1.0, &b);
    let interior = mass.mul_vec(&problem.f_vals);
    let solver = GeneralSolver::new(&a);
    let ids = cloud.boundary_ids();
    let n = cloud.len();

    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let target = options.alm_tol * (1.0 + gmax);
    let mut w = vec![0.0; g.len()];
    let mut v: Option<Vec<f64>> = None;
    let mut history = Vec::new();
    let mut inner_iterations = 0;
    let mut residuals = Vec::new();
    let mut data_ext = vec![0.0; n];

    for outer in 0..options.alm_max_outer {
        for (l, &id) in ids.iter().enumerate() {
            data_ext[id] = g[l] + beta * w[l];
        }
        let mut rhs = b.mul_vec(&data_ext);
        rhs.iter_mut().zip(&interior).for_each(|(r, m)| *r += m);
        let sol = solver
            .solve(&rhs, v.as_deref(), options.alm_inner_tol, options)
            .map_err(|e| PimError::Outer {
                outer,
                source: Box::new(e),
            })?;
        inner_iterations += sol.iterations;
        residuals.push(sol.diagnostics.final_residual);
        let u = sol.u;
        let mut sup = 0.0f64;
        for (l, &id) in ids.iter().enumerate() {
            let r = g[l] - u[id];
            sup = sup.max(r.abs());
            w[l] += r / beta;
        }
        history.push(sup);
        v = Some(u);
        if sup <= target {
            break;
        }
    }
    let converged = history.last().is_some_and(|&r| r <= target);
    let final_residual = *residuals.last().unwrap();
    let solution = Solution {
        u: v.unwrap(),
        iterations: inner_iterations,
        residual_history: residuals,
        boundary_residual_history: history,
        multiplier: Some(w),
        diagnostics: super::Diagnostics {
            final_residual,
            ..Default::default()
        },
    };
    Ok(AlmRun { solution, converged })
}
