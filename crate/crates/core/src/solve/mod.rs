//! Linear solves (Neumann, Robin), the augmented-Lagrangian Dirichlet loop
//! and generalized eigensolves.

mod alm;
mod eigen;
pub mod krylov;

pub use alm::{alm_iterations, solve_dirichlet_alm, solve_dirichlet_alm_with, AlmRun};
pub use eigen::{solve_eigs, EigenPair};

use crate::assembly::OperatorBundle;
use crate::cloud::connected_components;
use crate::error::{PimError, Result};
use crate::sparse::{CsrMatrix, Ilu0};
use krylov::{conjugate_gradient, gmres, KrylovOutcome};

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Relative residual target for the linear solves.
    pub rel_tol: f64,
    /// Iteration cap; `None` means `10 N`.
    pub max_iter: Option<usize>,
    pub gmres_restart: usize,
    pub alm_beta: f64,
    /// ALM stops when `sup |g - v| <= alm_tol (1 + sup |g|)`.
    pub alm_tol: f64,
    pub alm_max_outer: usize,
    /// Relative tolerance of each inner Robin solve in the ALM loop.
    pub alm_inner_tol: f64,
    pub eig_count: usize,
    /// Shift for shift-invert; `None` picks a small negative shift from the matrix norms.
    pub eig_shift: Option<f64>,
    /// Residual target `|A v - λ M v| <= eig_tol |M v|`.
    pub eig_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter: None,
            gmres_restart: 60,
            alm_beta: 1.0,
            alm_tol: 1e-8,
            alm_max_outer: 100,
            alm_inner_tol: 1e-12,
            eig_count: 20,
            eig_shift: None,
            eig_tol: 1e-9,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rel_tol", self.rel_tol),
            ("alm_beta", self.alm_beta),
            ("alm_tol", self.alm_tol),
            ("alm_inner_tol", self.alm_inner_tol),
            ("eig_tol", self.eig_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PimError::Validation(format!("{name} must be positive, got {v}")));
            }
        }
        if self.gmres_restart == 0 || self.alm_max_outer == 0 {
            return Err(PimError::Validation(
                "gmres_restart and alm_max_outer must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn max_iter_for(&self, n: usize) -> usize {
        self.max_iter.unwrap_or(10 * n.max(1))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// `Σ rhs_i p_i V_i` before projection (Neumann).
    pub compatibility_defect: f64,
    /// Constant removed from the iterate to reach `Σ u_i p_i V_i = 0` (Neumann).
    pub nullspace_removed: f64,
    pub final_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub u: Vec<f64>,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    /// Sup-norm boundary residual per outer step (ALM only).
    pub boundary_residual_history: Vec<f64>,
    /// Final multiplier `w` on the boundary (ALM only).
    pub multiplier: Option<Vec<f64>>,
    pub diagnostics: Diagnostics,
}

impl Solution {
    fn from_krylov(out: KrylovOutcome) -> Self {
        let final_residual = *out.history.last().unwrap_or(&0.0);
        Self {
            u: out.x,
            iterations: out.iterations,
            residual_history: out.history,
            boundary_residual_history: Vec::new(),
            multiplier: None,
            diagnostics: Diagnostics {
                final_residual,
                ..Diagnostics::default()
            },
        }
    }
}

/// `M f + boundary load`, the right-hand side of the Neumann or Robin system.
pub fn system_rhs(bundle: &OperatorBundle, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() != bundle.len() {
        return Err(PimError::Dimension {
            what: "forcing",
            expected: bundle.len(),
            got: f.len(),
        });
    }
    let mut rhs = bundle.mass.mul_vec(f);
    rhs.iter_mut().zip(&bundle.boundary_rhs).for_each(|(r, b)| *r += b);
    Ok(rhs)
}

fn check_rhs(bundle: &OperatorBundle, rhs: &[f64]) -> Result<()> {
    if rhs.len() != bundle.len() {
        return Err(PimError::Dimension {
            what: "right-hand side",
            expected: bundle.len(),
            got: rhs.len(),
        });
    }
    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(PimError::Validation("right-hand side has non-finite entries".into()));
    }
    Ok(())
}

/// Fails with the component sizes when the stiffness graph is disconnected.
pub fn check_connected(a: &CsrMatrix) -> Result<()> {
    let (_, sizes) = connected_components(a.nrows(), |i| {
        let (cols, vals) = a.row(i);
        cols.iter()
            .zip(vals)
            .filter(move |(&j, &v)| j != i && v != 0.0)
            .map(|(&j, _)| j)
            .collect::<Vec<_>>()
    });
    if sizes.len() > 1 {
        return Err(PimError::Singular { component_sizes: sizes });
    }
    Ok(())
}

/// Solves `L u = rhs` on `Σ u_i p_i V_i = 0`.
///
/// With a global bandwidth the system is symmetrized by `D = diag(p V)` and
/// solved by Jacobi-preconditioned CG; the compatible part of `rhs` is kept.
/// With a per-point bandwidth the bordered system `[L 1; Dᵀ 0]` goes to GMRES.
pub fn solve_neumann(bundle: &OperatorBundle, rhs: &[f64], options: &SolveOptions) -> Result<Solution> {
    options.validate()?;
    check_rhs(bundle, rhs)?;
    let n = bundle.len();
    let d = &bundle.symmetrizer;
    let dsum: f64 = d.iter().sum();
    let defect: f64 = rhs.iter().zip(d).map(|(r, d)| r * d).sum();
    if n == 0 {
        return Ok(Solution::from_krylov(KrylovOutcome {
            x: Vec::new(),
            iterations: 0,
            history: vec![0.0],
            converged: true,
        }));
    }
    check_connected(&bundle.stiffness)?;

    let max_iter = options.max_iter_for(n);
    let mut sol = if bundle.bandwidth.is_global() {
        let k = bundle.stiffness.scale_rows(d);
        let c = defect / dsum;
        let mut b: Vec<f64> = rhs.iter().zip(d).map(|(r, d)| d * (r - c)).collect();
        center(&mut b);
        let diag = k.diagonal();
        let inv: Vec<f64> = diag.iter().map(|&v| if v > 0.0 { 1.0 / v } else { 1.0 }).collect();
        let out = conjugate_gradient(
            |x, y| k.mul_vec_into(x, y),
            |r, z| z.iter_mut().zip(r).zip(&inv).for_each(|((z, r), s)| *z = r * s),
            center,
            &b,
            None,
            options.rel_tol,
            max_iter,
        );
        if !out.converged {
            return Err(not_converged(&out));
        }
        Solution::from_krylov(out)
    } else {
        // bordered system: unknowns (u, μ), rows L u + μ 1 = rhs and Dᵀ u = 0
        let a = &bundle.stiffness;
        let apply = |x: &[f64], y: &mut [f64]| {
            a.mul_vec_into(&x[..n], &mut y[..n]);
            let mu = x[n];
            y[..n].iter_mut().for_each(|v| *v += mu);
            y[n] = x[..n].iter().zip(d).map(|(u, d)| u * d).sum::<f64>() / dsum;
        };
        let diag = a.diagonal();
        let inv: Vec<f64> = diag.iter().map(|&v| if v > 0.0 { 1.0 / v } else { 1.0 }).collect();
        let mut b = rhs.to_vec();
        b.push(0.0);
        let out = gmres(
            apply,
            |v| v[..n].iter_mut().zip(&inv).for_each(|(v, s)| *v *= s),
            &b,
            None,
            options.rel_tol,
            options.gmres_restart,
            max_iter,
        );
        if !out.converged {
            return Err(not_converged(&out));
        }
        let mut sol = Solution::from_krylov(out);
        sol.u.truncate(n);
        sol
    };
    let shift: f64 = sol.u.iter().zip(d).map(|(u, d)| u * d).sum::<f64>() / dsum;
    sol.u.iter_mut().for_each(|u| *u -= shift);
    sol.diagnostics.compatibility_defect = defect;
    sol.diagnostics.nullspace_removed = shift;
    Ok(sol)
}

fn center(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

fn not_converged(out: &KrylovOutcome) -> PimError {
    PimError::NotConverged {
        iterations: out.iterations,
        residual: *out.history.last().unwrap_or(&f64::NAN),
    }
}

/// Preconditioned GMRES for a general sparse system.
pub(crate) struct GeneralSolver<'a> {
    a: &'a CsrMatrix,
    ilu: Option<Ilu0>,
    inv_diag: Vec<f64>,
}

impl<'a> GeneralSolver<'a> {
    pub(crate) fn new(a: &'a CsrMatrix) -> Self {
        let ilu = Ilu0::new(a);
        let inv_diag = a
            .diagonal()
            .iter()
            .map(|&v| if v != 0.0 { 1.0 / v } else { 1.0 })
            .collect();
        Self { a, ilu, inv_diag }
    }

    pub(crate) fn solve(
        &self,
        b: &[f64],
        x0: Option<&[f64]>,
        rel_tol: f64,
        options: &SolveOptions,
    ) -> Result<Solution> {
        let max_iter = options.max_iter_for(b.len());
        let precond = |v: &mut [f64]| match &self.ilu {
            Some(ilu) => ilu.apply(v),
            None => v.iter_mut().zip(&self.inv_diag).for_each(|(v, s)| *v *= s),
        };
        let out = gmres(
            |x, y| self.a.mul_vec_into(x, y),
            precond,
            b,
            x0,
            rel_tol,
            options.gmres_restart,
            max_iter,
        );
        if !out.converged {
            return Err(not_converged(&out));
        }
        Ok(Solution::from_krylov(out))
    }
}

/// Solves `(L + B) u = rhs_total` for a bundle with Robin coupling.
pub fn solve_robin(bundle: &OperatorBundle, rhs_total: &[f64], options: &SolveOptions) -> Result<Solution> {
    options.validate()?;
    check_rhs(bundle, rhs_total)?;
    if bundle.robin.is_none() {
        return Err(PimError::Validation("bundle has no Robin coupling".into()));
    }
    let a = bundle.system_matrix();
    GeneralSolver::new(&a).solve(rhs_total, None, options.rel_tol, options)
}
