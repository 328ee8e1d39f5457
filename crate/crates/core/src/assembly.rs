//! Sparse discretization of the nonlocal operators on a point cloud.
//!
//! With `R_ij = R_t(x_i, x_j)` and `R̄_ij = R̄_t(x_i, x_j)`:
//!
//! * stiffness `(L u)_i = (1/t) Σ_j R_ij (u_i - u_j) p_j V_j`
//! * mass `M_ij = R̄_ij V_j / p_j`, so `(M f)_i` is the interior load
//! * Neumann load `2 Σ_{s_j ∈ S} R̄(x_i, s_j) b_j p_j A_j`
//! * Robin coupling `(2/β) Σ_{s_l ∈ S} R̄(x_i, s_l) u_l p_l A_l`
//!
//! Rows centered at `x_i` use the bandwidth `t(x_i)`, so a per-point
//! bandwidth gives the adaptive operator.

use rayon::prelude::*;

use crate::cloud::kdtree::{dist2, KdTree};
use crate::cloud::{Bandwidth, NeighborIndex, PointCloud};
use crate::error::{PimError, Result};
use crate::kernel::KernelSpec;
use crate::sparse::CsrMatrix;

/// Boundary data attached to a problem; vectors are indexed by boundary slot.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryCondition {
    /// Prescribed normal derivative `∂u/∂n = b`.
    Neumann(Vec<f64>),
    /// Prescribed trace `u = g`.
    Dirichlet(Vec<f64>),
    /// `u + β ∂u/∂n = g`.
    Robin { g: Vec<f64>, beta: f64 },
}

impl BoundaryCondition {
    pub fn data(&self) -> &[f64] {
        match self {
            BoundaryCondition::Neumann(v) | BoundaryCondition::Dirichlet(v) => v,
            BoundaryCondition::Robin { g, .. } => g,
        }
    }
}

/// Coefficient, forcing and boundary data of `-div(p² ∇u) = f`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub p_vals: Vec<f64>,
    pub f_vals: Vec<f64>,
    pub boundary: BoundaryCondition,
    /// Project the Neumann load onto the compatible subspace before solving.
    pub compat_shift: bool,
}

impl ProblemSpec {
    pub fn neumann(p_vals: Vec<f64>, f_vals: Vec<f64>, b_vals: Vec<f64>) -> Self {
        ProblemSpec {
            p_vals,
            f_vals,
            boundary: BoundaryCondition::Neumann(b_vals),
            compat_shift: true,
        }
    }

    pub fn dirichlet(p_vals: Vec<f64>, f_vals: Vec<f64>, g_vals: Vec<f64>) -> Self {
        ProblemSpec {
            p_vals,
            f_vals,
            boundary: BoundaryCondition::Dirichlet(g_vals),
            compat_shift: false,
        }
    }

    pub fn robin(p_vals: Vec<f64>, f_vals: Vec<f64>, g_vals: Vec<f64>, beta: f64) -> Self {
        ProblemSpec {
            p_vals,
            f_vals,
            boundary: BoundaryCondition::Robin { g: g_vals, beta },
            compat_shift: false,
        }
    }

    pub fn validate(&self, cloud: &PointCloud) -> Result<()> {
        check_coefficient(cloud, &self.p_vals)?;
        check_len("forcing", cloud.len(), self.f_vals.len())?;
        check_len("boundary data", cloud.num_boundary(), self.boundary.data().len())?;
        if let BoundaryCondition::Robin { beta, .. } = self.boundary {
            check_beta(beta)?;
        }
        Ok(())
    }

    /// Bounds `(c0, c1)` of the coefficient samples.
    pub fn ellipticity(&self) -> (f64, f64) {
        self.p_vals
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &p| (lo.min(p), hi.max(p)))
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(PimError::Dimension { what, expected, got });
    }
    Ok(())
}

fn check_coefficient(cloud: &PointCloud, p: &[f64]) -> Result<()> {
    check_len("coefficient", cloud.len(), p.len())?;
    if let Some(i) = p.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(PimError::Validation(format!(
            "coefficient p at point {i} is {} (must be positive)",
            p[i]
        )));
    }
    Ok(())
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(PimError::Validation(format!(
            "Robin parameter beta = {beta} must be positive"
        )));
    }
    Ok(())
}

/// Discrete operators for one cloud, kernel and coefficient.
#[derive(Debug, Clone)]
pub struct OperatorBundle {
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    /// Neumann boundary load; zero for other boundary types.
    pub boundary_rhs: Vec<f64>,
    /// Robin coupling `B` (nonzero only in boundary columns) when present.
    pub robin: Option<CsrMatrix>,
    /// `D_i = p_i V_i`; `D L` is symmetric for a global bandwidth.
    pub symmetrizer: Vec<f64>,
    pub bandwidth: Bandwidth,
    /// Points with no neighbor within the kernel cutoff (their stiffness row is zero).
    pub isolated: Vec<usize>,
}

impl OperatorBundle {
    pub fn len(&self) -> usize {
        self.symmetrizer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symmetrizer.is_empty()
    }

    /// `L + B`, or `L` without Robin coupling.
    pub fn system_matrix(&self) -> CsrMatrix {
        match &self.robin {
            Some(b) => CsrMatrix::linear_combination(1.0, &self.stiffness, 1.0, b),
            None => self.stiffness.clone(),
        }
    }
}

/// Cloud, kernel and neighbor structure shared by all assembly routines.
pub struct Assembler<'a> {
    cloud: &'a PointCloud,
    kernel: KernelSpec,
    index: NeighborIndex,
    tree: KdTree<'a>,
}

impl<'a> Assembler<'a> {
    pub fn new(cloud: &'a PointCloud, kernel: KernelSpec) -> Result<Self> {
        kernel.bandwidth.validate(cloud.len())?;
        let index = NeighborIndex::build(cloud, kernel.max_cutoff());
        Ok(Self::with_index(cloud, kernel, index))
    }

    /// Uses a prebuilt index whose cutoff must cover `kernel.max_cutoff()`.
    pub fn with_index(cloud: &'a PointCloud, kernel: KernelSpec, index: NeighborIndex) -> Self {
        Assembler {
            cloud,
            kernel,
            index,
            tree: KdTree::new(cloud.coords(), cloud.dim()),
        }
    }

    pub fn cloud(&self) -> &PointCloud {
        self.cloud
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn neighbors(&self) -> &NeighborIndex {
        &self.index
    }

    /// Neighbors of row `i` within that row's kernel reach, with squared distances.
    fn row_neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let t = self.kernel.bandwidth.at(i);
        let c = self.kernel.cutoff(t);
        let c2 = c * c;
        let xi = self.cloud.point(i);
        self.index
            .neighbors(i)
            .iter()
            .map(move |&j| (j, dist2(xi, self.cloud.point(j))))
            .filter(move |&(_, d2)| d2 <= c2)
    }

    /// Stiffness matrix; second value lists isolated rows.
    pub fn stiffness(&self, p: &[f64]) -> Result<(CsrMatrix, Vec<usize>)> {
        check_coefficient(self.cloud, p)?;
        let vol = self.cloud.volume();
        let rows: Vec<(Vec<(usize, f64)>, bool)> = (0..self.cloud.len())
            .into_par_iter()
            .map(|i| {
                let t = self.kernel.bandwidth.at(i);
                let mut row = Vec::with_capacity(self.index.neighbors(i).len() + 1);
                let mut diag = 0.0;
                for (j, d2) in self.row_neighbors(i) {
                    let w = self.kernel.r_d2(d2, t) * p[j] * vol[j] / t;
                    diag += w;
                    row.push((j, -w));
                }
                let isolated = row.is_empty();
                row.push((i, diag));
                (row, isolated)
            })
            .collect();
        let isolated = rows.iter().enumerate().filter(|(_, r)| r.1).map(|(i, _)| i).collect();
        let matrix = CsrMatrix::from_rows(self.cloud.len(), rows.into_iter().map(|r| r.0).collect());
        Ok((matrix, isolated))
    }

    pub fn mass(&self, p: &[f64]) -> Result<CsrMatrix> {
        check_coefficient(self.cloud, p)?;
        let vol = self.cloud.volume();
        let rows = (0..self.cloud.len())
            .into_par_iter()
            .map(|i| {
                let t = self.kernel.bandwidth.at(i);
                let mut row = Vec::with_capacity(self.index.neighbors(i).len() + 1);
                row.push((i, self.kernel.rbar_d2(0.0, t) * vol[i] / p[i]));
                for (j, d2) in self.row_neighbors(i) {
                    row.push((j, self.kernel.rbar_d2(d2, t) * vol[j] / p[j]));
                }
                row
            })
            .collect();
        Ok(CsrMatrix::from_rows(self.cloud.len(), rows))
    }

    /// `Σ_j R̄_ij f_j V_j / p_j`, summed in ascending column order.
    pub fn rhs_interior(&self, p: &[f64], f: &[f64]) -> Result<Vec<f64>> {
        check_coefficient(self.cloud, p)?;
        check_len("forcing", self.cloud.len(), f.len())?;
        let vol = self.cloud.volume();
        Ok((0..self.cloud.len())
            .into_par_iter()
            .map(|i| {
                let t = self.kernel.bandwidth.at(i);
                let mut terms: Vec<(usize, f64)> = self.row_neighbors(i).collect();
                terms.push((i, 0.0));
                terms.sort_unstable_by_key(|e| e.0);
                terms
                    .into_iter()
                    .map(|(j, d2)| self.kernel.rbar_d2(d2, t) * vol[j] / p[j] * f[j])
                    .sum()
            })
            .collect())
    }

    /// Per-row sum `Σ_{j ∈ S ∩ reach(i)} R̄_ij w(j)` over boundary points.
    fn boundary_sum(&self, weight: impl Fn(usize, usize) -> f64 + Sync) -> Vec<f64> {
        (0..self.cloud.len())
            .into_par_iter()
            .map(|i| {
                let t = self.kernel.bandwidth.at(i);
                let mut s = match self.cloud.boundary_slot(i) {
                    Some(l) => self.kernel.rbar_d2(0.0, t) * weight(i, l),
                    None => 0.0,
                };
                for (j, d2) in self.row_neighbors(i) {
                    if let Some(l) = self.cloud.boundary_slot(j) {
                        s += self.kernel.rbar_d2(d2, t) * weight(j, l);
                    }
                }
                s
            })
            .collect()
    }

    /// `2 Σ_{s_j ∈ S} R̄(x_i, s_j) b_j p_j A_j`.
    pub fn rhs_neumann(&self, p: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        check_coefficient(self.cloud, p)?;
        check_len("Neumann data", self.cloud.num_boundary(), b.len())?;
        let area = self.cloud.area();
        Ok(self.boundary_sum(|j, l| 2.0 * b[l] * p[j] * area[l]))
    }

    /// Robin coupling matrix `B` and load `B g`.
    pub fn robin(&self, p: &[f64], g: &[f64], beta: f64) -> Result<(CsrMatrix, Vec<f64>)> {
        check_coefficient(self.cloud, p)?;
        check_len("Robin data", self.cloud.num_boundary(), g.len())?;
        check_beta(beta)?;
        let area = self.cloud.area();
        let coef = 2.0 / beta;
        let rows = (0..self.cloud.len())
            .into_par_iter()
            .map(|i| {
                let t = self.kernel.bandwidth.at(i);
                let mut row = Vec::new();
                if let Some(l) = self.cloud.boundary_slot(i) {
                    row.push((i, coef * self.kernel.rbar_d2(0.0, t) * p[i] * area[l]));
                }
                for (j, d2) in self.row_neighbors(i) {
                    if let Some(l) = self.cloud.boundary_slot(j) {
                        row.push((j, coef * self.kernel.rbar_d2(d2, t) * p[j] * area[l]));
                    }
                }
                row
            })
            .collect();
        let b = CsrMatrix::from_rows(self.cloud.len(), rows);
        let mut g_ext = vec![0.0; self.cloud.len()];
        for (l, &id) in self.cloud.boundary_ids().iter().enumerate() {
            g_ext[id] = g[l];
        }
        let rhs = b.mul_vec(&g_ext);
        Ok((b, rhs))
    }

    /// Full operator bundle for a problem; the Robin block is built for
    /// Robin problems only (ALM rebuilds its right-hand side per iteration).
    pub fn bundle(&self, problem: &ProblemSpec) -> Result<OperatorBundle> {
        problem.validate(self.cloud)?;
        let p = &problem.p_vals;
        let (stiffness, isolated) = self.stiffness(p)?;
        let mass = self.mass(p)?;
        let (boundary_rhs, robin) = match &problem.boundary {
            BoundaryCondition::Neumann(b) => (self.rhs_neumann(p, b)?, None),
            BoundaryCondition::Robin { g, beta } => {
                let (b, rhs) = self.robin(p, g, *beta)?;
                (rhs, Some(b))
            }
            BoundaryCondition::Dirichlet(_) => (vec![0.0; self.cloud.len()], None),
        };
        Ok(OperatorBundle {
            stiffness,
            mass,
            boundary_rhs,
            robin,
            symmetrizer: symmetrizer(self.cloud, p),
            bandwidth: self.kernel.bandwidth.clone(),
            isolated,
        })
    }

    /// Bundle for the eigenproblem with homogeneous Neumann (`beta = None`)
    /// or homogeneous Robin boundary.
    pub fn eigen_bundle(&self, p: &[f64], beta: Option<f64>) -> Result<OperatorBundle> {
        let zeros = vec![0.0; self.cloud.num_boundary()];
        let f = vec![0.0; self.cloud.len()];
        let problem = match beta {
            Some(beta) => ProblemSpec::robin(p.to_vec(), f, zeros, beta),
            None => ProblemSpec::neumann(p.to_vec(), f, zeros),
        };
        self.bundle(&problem)
    }

    /// `I_f(u)(x) = [Σ R_t(x,x_j) u_j p_j V_j + t Σ R̄_t(x,x_j) f_j V_j/p_j] / Σ R_t(x,x_j) p_j V_j`.
    ///
    /// Reproduces `u_j` at `x_j` whenever `u` solves the discrete system `L u = M f`.
    pub fn interpolate(&self, p: &[f64], f: &[f64], u: &[f64], x: &[f64]) -> Result<f64> {
        let Bandwidth::Global(t) = self.kernel.bandwidth else {
            return Err(PimError::Validation("interpolation needs a global bandwidth".into()));
        };
        check_coefficient(self.cloud, p)?;
        check_len("forcing", self.cloud.len(), f.len())?;
        check_len("solution", self.cloud.len(), u.len())?;
        check_len("query point", self.cloud.dim(), x.len())?;
        let c = self.kernel.cutoff(t);
        let mut near = Vec::new();
        self.tree.within(x, c * c, &mut near);
        near.sort_unstable();
        let vol = self.cloud.volume();
        let (mut num, mut den) = (0.0, 0.0);
        for j in near {
            let d2 = dist2(x, self.cloud.point(j));
            let r = self.kernel.r_d2(d2, t);
            num += r * u[j] * p[j] * vol[j] + t * self.kernel.rbar_d2(d2, t) * f[j] * vol[j] / p[j];
            den += r * p[j] * vol[j];
        }
        if den < 1e-300 {
            return Err(PimError::OutOfReach(x.to_vec()));
        }
        Ok(num / den)
    }
}

/// `D_i = p_i V_i`.
pub fn symmetrizer(cloud: &PointCloud, p: &[f64]) -> Vec<f64> {
    p.iter().zip(cloud.volume()).map(|(p, v)| p * v).collect()
}

pub fn assemble_stiffness(cloud: &PointCloud, kernel: &KernelSpec, p: &[f64]) -> Result<CsrMatrix> {
    if !kernel.bandwidth.is_global() {
        return Err(PimError::Validation(
            "use assemble_stiffness_adaptive for per-point bandwidths".into(),
        ));
    }
    Ok(Assembler::new(cloud, kernel.clone())?.stiffness(p)?.0)
}

pub fn assemble_stiffness_adaptive(cloud: &PointCloud, kernel: &KernelSpec, p: &[f64]) -> Result<CsrMatrix> {
    Ok(Assembler::new(cloud, kernel.clone())?.stiffness(p)?.0)
}

pub fn assemble_mass(cloud: &PointCloud, kernel: &KernelSpec, p: &[f64]) -> Result<CsrMatrix> {
    Assembler::new(cloud, kernel.clone())?.mass(p)
}

pub fn assemble_rhs_interior(cloud: &PointCloud, kernel: &KernelSpec, p: &[f64], f: &[f64]) -> Result<Vec<f64>> {
    Assembler::new(cloud, kernel.clone())?.rhs_interior(p, f)
}

pub fn assemble_rhs_neumann(cloud: &PointCloud, kernel: &KernelSpec, p: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    Assembler::new(cloud, kernel.clone())?.rhs_neumann(p, b)
}

pub fn assemble_robin(
    cloud: &PointCloud,
    kernel: &KernelSpec,
    p: &[f64],
    g: &[f64],
    beta: f64,
) -> Result<(CsrMatrix, Vec<f64>)> {
    Assembler::new(cloud, kernel.clone())?.robin(p, g, beta)
}

pub fn interpolate(cloud: &PointCloud, kernel: &KernelSpec, p: &[f64], f: &[f64], u: &[f64], x: &[f64]) -> Result<f64> {
    Assembler::new(cloud, kernel.clone())?.interpolate(p, f, u, x)
}

/// `max_i |(L 1)_i| / max_i |L_ii|`.
pub fn constant_annihilation_defect(stiffness: &CsrMatrix) -> f64 {
    let ones = vec![1.0; stiffness.ncols()];
    let l1 = stiffness.mul_vec(&ones);
    let worst = l1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diag = stiffness.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if diag == 0.0 {
        worst
    } else {
        worst / diag
    }
}

/// `‖DL - (DL)ᵀ‖_max / ‖DL‖_max`.
pub fn symmetrization_defect(stiffness: &CsrMatrix, symmetrizer: &[f64]) -> f64 {
    let dl = stiffness.scale_rows(symmetrizer);
    let m = dl.max_abs();
    if m == 0.0 {
        0.0
    } else {
        dl.asymmetry() / m
    }
}
