//! Symmetric kernel weight graphs, the nonlocal gradient and the
//! constrained weighted Laplace solve.

use rayon::prelude::*;

use crate::cloud::kdtree::dist2;
use crate::cloud::{connected_components, NeighborIndex, PointCloud};
use crate::error::{PimError, Result};
use crate::kernel::KernelSpec;
use crate::solve::krylov::conjugate_gradient;
use crate::solve::SolveOptions;

/// Kernel neighborhoods of every point plus symmetrized edge weights.
///
/// Row `i` holds the neighbors `j` seen from `x_i` with bandwidth `t_i`.
/// The edge weight is `w_ij = ½ (a_ij + a_ji)` with
/// `a_ij = C_{t_i} R(|x_i − x_j|² / 4t_i) V_i V_j / t_i` when `j` is in row `i`
/// and zero otherwise.
#[derive(Debug, Clone)]
pub struct WeightGraph {
    kernel: KernelSpec,
    bandwidth: Vec<f64>,
    /// `(j, |x_i − x_j|²)` per row, self excluded.
    rows: Vec<Vec<(usize, f64)>>,
    /// `(j, w_ij)` per node, symmetric, self excluded.
    edges: Vec<Vec<(usize, f64)>>,
}

impl WeightGraph {
    /// Rows are all points within the kernel cutoff of `t_i`.
    pub fn from_kernel(cloud: &PointCloud, kernel: &KernelSpec) -> Result<Self> {
        kernel.bandwidth.validate(cloud.len())?;
        let index = NeighborIndex::build(cloud, kernel.max_cutoff());
        let rows = (0..cloud.len())
            .into_par_iter()
            .map(|i| {
                let reach = kernel.cutoff(kernel.bandwidth.at(i)).powi(2);
                index
                    .neighbors(i)
                    .iter()
                    .map(|&j| (j, dist2(cloud.point(i), cloud.point(j))))
                    .filter(|&(_, d2)| d2 <= reach)
                    .collect()
            })
            .collect();
        let bandwidth = (0..cloud.len()).map(|i| kernel.bandwidth.at(i)).collect();
        Ok(Self::assemble(cloud, kernel.clone(), bandwidth, rows))
    }

    /// Rows are the `k` nearest other points (ties broken by index), found by
    /// exhaustive search; `t_i` is the squared distance to the `k`-th of them.
    ///
    /// A zero radius (more than `k` duplicates) falls back to the nearest
    /// positive distance of the row, and to 1 when every point coincides.
    pub fn knn(cloud: &PointCloud, kernel: &KernelSpec, k: usize) -> Result<Self> {
        let n = cloud.len();
        if k == 0 || k >= n {
            return Err(PimError::InsufficientPoints { needed: k, have: n });
        }
        let found: Vec<(Vec<(usize, f64)>, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = cloud.point(i);
                let mut all: Vec<(f64, usize)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (dist2(x, cloud.point(j)), j))
                    .collect();
                let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
                let nearest_positive = all
                    .iter()
                    .map(|p| p.0)
                    .filter(|&d| d > 0.0)
                    .fold(f64::INFINITY, f64::min);
                all.select_nth_unstable_by(k - 1, order);
                all.truncate(k);
                all.sort_unstable_by(order);
                let rho2 = all[k - 1].0;
                let t = if rho2 > 0.0 {
                    rho2
                } else if nearest_positive.is_finite() {
                    nearest_positive
                } else {
                    1.0
                };
                (all.into_iter().map(|(d2, j)| (j, d2)).collect(), t)
            })
            .collect();
        let (rows, bandwidth): (Vec<_>, Vec<_>) = found.into_iter().unzip();
        Ok(Self::assemble(cloud, kernel.clone(), bandwidth, rows))
    }

    fn assemble(cloud: &PointCloud, kernel: KernelSpec, bandwidth: Vec<f64>, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = cloud.len();
        let v = cloud.volume();
        let mut directed: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, row) in rows.iter().enumerate() {
            let t = bandwidth[i];
            for &(j, d2) in row {
                let a = 0.5 * kernel.r_d2(d2, t) * v[i] * v[j] / t;
                directed[i].push((j, a));
                directed[j].push((i, a));
            }
        }
        let edges = directed
            .into_par_iter()
            .map(|mut list| {
                list.sort_unstable_by_key(|e| e.0);
                let mut merged: Vec<(usize, f64)> = Vec::with_capacity(list.len());
                for (j, w) in list {
                    match merged.last_mut() {
                        Some(last) if last.0 == j => last.1 += w,
                        _ => merged.push((j, w)),
                    }
                }
                merged
            })
            .collect();
        Self {
            kernel,
            bandwidth,
            rows,
            edges,
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn edges(&self, i: usize) -> &[(usize, f64)] {
        &self.edges[i]
    }

    /// `Σ_{i<j} w_ij q_ij (u_i − u_j)²` with `q_ij = (q_i + q_j) / 2`.
    pub fn energy(&self, q: &[f64], u: &[f64]) -> f64 {
        (0..self.len())
            .into_par_iter()
            .map(|i| {
                self.edges[i]
                    .iter()
                    .filter(|e| e.0 > i)
                    .map(|&(j, w)| w * 0.5 * (q[i] + q[j]) * (u[i] - u[j]).powi(2))
                    .sum::<f64>()
            })
            .collect::<Vec<f64>>()
            .into_iter()
            .sum()
    }

    /// `∇u(x_i) = (1 / (2 t_i w̄_i)) Σ_j R_{t_i}(x_i, x_j)(x_i − x_j)(u_i − u_j) V_j`
    /// with `w̄_i = Σ_j R̄_{t_i}(x_i, x_j) V_j`, self included.
    pub fn gradient(&self, cloud: &PointCloud, u: &[f64]) -> Result<Vec<Vec<f64>>> {
        if u.len() != cloud.len() {
            return Err(PimError::Dimension {
                what: "gradient input",
                expected: cloud.len(),
                got: u.len(),
            });
        }
        let v = cloud.volume();
        let dim = cloud.dim();
        (0..cloud.len())
            .into_par_iter()
            .map(|i| {
                let t = self.bandwidth[i];
                let x = cloud.point(i);
                let mut g = vec![0.0; dim];
                let mut wbar = self.kernel.rbar_d2(0.0, t) * v[i];
                for &(j, d2) in &self.rows[i] {
                    wbar += self.kernel.rbar_d2(d2, t) * v[j];
                    let c = self.kernel.r_d2(d2, t) * (u[i] - u[j]) * v[j];
                    for (gk, (xk, yk)) in g.iter_mut().zip(x.iter().zip(cloud.point(j))) {
                        *gk += c * (xk - yk);
                    }
                }
                if !(wbar > 0.0) {
                    return Err(PimError::IsolatedPoint(i));
                }
                let s = 1.0 / (2.0 * t * wbar);
                g.iter_mut().for_each(|gk| *gk *= s);
                Ok(g)
            })
            .collect()
    }

    /// Minimizes `Σ w_ij q_ij (u_i − u_j)²` subject to `u = values` on `ids`,
    /// by eliminating the constrained rows and running Jacobi-preconditioned CG
    /// on the free block. Constrained entries are copied verbatim.
    pub fn solve_constrained(
        &self,
        q: &[f64],
        ids: &[usize],
        values: &[f64],
        x0: Option<&[f64]>,
        options: &SolveOptions,
    ) -> Result<Vec<f64>> {
        let n = self.len();
        let free_slot = self.free_slots(q, ids, values)?;
        let mut u = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
        for (&i, &val) in ids.iter().zip(values) {
            u[i] = val;
        }
        let free: Vec<usize> = (0..n).filter(|&i| free_slot[i].is_some()).collect();
        if free.is_empty() {
            return Ok(u);
        }
        self.check_anchored(&free, &free_slot)?;
        let qe = |i: usize, j: usize| 0.5 * (q[i] + q[j]);
        let mut rhs = vec![0.0; free.len()];
        let mut diag = vec![0.0; free.len()];
        for (s, &i) in free.iter().enumerate() {
            for &(j, w) in &self.edges[i] {
                let c = w * qe(i, j);
                diag[s] += c;
                if free_slot[j].is_none() {
                    rhs[s] += c * u[j];
                }
            }
        }
        let apply = |x: &[f64], y: &mut [f64]| {
            y.par_iter_mut().enumerate().for_each(|(s, ys)| {
                let i = free[s];
                let mut acc = diag[s] * x[s];
                for &(j, w) in &self.edges[i] {
                    if let Some(sj) = free_slot[j] {
                        acc -= w * qe(i, j) * x[sj];
                    }
                }
                *ys = acc;
            });
        };
        let precond = |r: &[f64], z: &mut [f64]| {
            for ((z, r), d) in z.iter_mut().zip(r).zip(&diag) {
                *z = r / d;
            }
        };
        let start: Vec<f64> = free.iter().map(|&i| u[i]).collect();
        let out = conjugate_gradient(
            apply,
            precond,
            |_| {},
            &rhs,
            Some(&start),
            options.rel_tol,
            options.max_iter_for(free.len()),
        );
        if !out.converged {
            return Err(PimError::NotConverged {
                iterations: out.iterations,
                residual: *out.history.last().unwrap_or(&f64::NAN),
            });
        }
        for (s, &i) in free.iter().enumerate() {
            u[i] = out.x[s];
        }
        Ok(u)
    }

    /// Penalized variant: minimizes the energy plus `(1/β) Σ_S (u_i − f_i)²`.
    pub fn solve_penalized(
        &self,
        q: &[f64],
        ids: &[usize],
        values: &[f64],
        beta: f64,
        x0: Option<&[f64]>,
        options: &SolveOptions,
    ) -> Result<Vec<f64>> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(PimError::Validation(format!(
                "constraint beta must be positive, got {beta}"
            )));
        }
        let n = self.len();
        let slots = self.free_slots(q, ids, values)?;
        let constrained: Vec<bool> = slots.iter().map(Option::is_none).collect();
        let free: Vec<usize> = (0..n).filter(|&i| !constrained[i]).collect();
        self.check_anchored(&free, &slots)?;
        let qe = |i: usize, j: usize| 0.5 * (q[i] + q[j]);
        let mut diag: Vec<f64> = (0..n)
            .map(|i| self.edges[i].iter().map(|&(j, w)| w * qe(i, j)).sum())
            .collect();
        let mut rhs = vec![0.0; n];
        for (&i, &val) in ids.iter().zip(values) {
            diag[i] += 1.0 / beta;
            rhs[i] = val / beta;
        }
        let apply = |x: &[f64], y: &mut [f64]| {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| {
                *yi = diag[i] * x[i] - self.edges[i].iter().map(|&(j, w)| w * qe(i, j) * x[j]).sum::<f64>();
            });
        };
        let precond = |r: &[f64], z: &mut [f64]| {
            for ((z, r), d) in z.iter_mut().zip(r).zip(&diag) {
                *z = r / d;
            }
        };
        let out = conjugate_gradient(
            apply,
            precond,
            |_| {},
            &rhs,
            x0,
            options.rel_tol,
            options.max_iter_for(n),
        );
        if !out.converged {
            return Err(PimError::NotConverged {
                iterations: out.iterations,
                residual: *out.history.last().unwrap_or(&f64::NAN),
            });
        }
        Ok(out.x)
    }

    /// Slot in the free block per node, `None` for constrained nodes.
    fn free_slots(&self, q: &[f64], ids: &[usize], values: &[f64]) -> Result<Vec<Option<usize>>> {
        let n = self.len();
        if q.len() != n {
            return Err(PimError::Dimension {
                what: "coefficient values",
                expected: n,
                got: q.len(),
            });
        }
        if values.len() != ids.len() {
            return Err(PimError::Dimension {
                what: "constrained values",
                expected: ids.len(),
                got: values.len(),
            });
        }
        if let Some(i) = q.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(PimError::Validation(format!(
                "coefficient at point {i} is {} (must be positive)",
                q[i]
            )));
        }
        let mut slot = vec![Some(0); n];
        for &i in ids {
            if i >= n {
                return Err(PimError::Validation(format!("constrained index {i} out of range")));
            }
            slot[i] = None;
        }
        let mut next = 0;
        for s in slot.iter_mut().flatten() {
            *s = next;
            next += 1;
        }
        Ok(slot)
    }

    /// Every connected component of the free subgraph must touch a constrained node.
    fn check_anchored(&self, free: &[usize], slot: &[Option<usize>]) -> Result<()> {
        let (labels, sizes) = connected_components(free.len(), |s| {
            self.edges[free[s]]
                .iter()
                .filter(|e| e.1 > 0.0)
                .filter_map(|&(j, _)| slot[j])
                .collect::<Vec<_>>()
        });
        let mut anchored = vec![false; sizes.len()];
        for (s, &i) in free.iter().enumerate() {
            if self.edges[i].iter().any(|&(j, w)| w > 0.0 && slot[j].is_none()) {
                anchored[labels[s]] = true;
            }
        }
        let floating: Vec<usize> = sizes
            .iter()
            .zip(&anchored)
            .filter(|(_, a)| !**a)
            .map(|(s, _)| *s)
            .collect();
        if floating.is_empty() {
            Ok(())
        } else {
            Err(PimError::Singular {
                component_sizes: floating,
            })
        }
    }
}

/// Nonlocal gradient of `u` at every point, using all neighbors within the
/// kernel cutoff.
pub fn nonlocal_gradient(cloud: &PointCloud, kernel: &KernelSpec, u: &[f64]) -> Result<Vec<Vec<f64>>> {
    WeightGraph::from_kernel(cloud, kernel)?.gradient(cloud, u)
}

/// One constrained solve of `div(q ∇u) = 0` with `u = values` on `ids`.
pub fn solve_constrained_laplace(
    cloud: &PointCloud,
    kernel: &KernelSpec,
    q: &[f64],
    ids: &[usize],
    values: &[f64],
    options: &SolveOptions,
) -> Result<Vec<f64>> {
    WeightGraph::from_kernel(cloud, kernel)?.solve_constrained(q, ids, values, None, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Bandwidth;

    fn chain(xs: &[f64]) -> PointCloud {
        PointCloud::new(1, 1, xs.to_vec(), vec![1.0; xs.len()], vec![], vec![]).unwrap()
    }

    #[test]
    fn three_point_chain_midpoint() {
        let cloud = chain(&[0.0, 1.0, 2.0]);
        let kernel = KernelSpec::gaussian(1.0, 1);
        let u = solve_constrained_laplace(
            &cloud,
            &kernel,
            &[1.0; 3],
            &[0, 2],
            &[0.0, 1.0],
            &SolveOptions::default(),
        )
        .unwrap();
        assert!((u[1] - 0.5).abs() < 1e-14);
        assert_eq!((u[0], u[2]), (0.0, 1.0));
    }

    #[test]
    fn all_constrained_is_verbatim() {
        let cloud = chain(&[0.0, 1.0]);
        let kernel = KernelSpec::gaussian(1.0, 1);
        let u = solve_constrained_laplace(
            &cloud,
            &kernel,
            &[1.0; 2],
            &[1, 0],
            &[0.3, -2.0],
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(u, vec![-2.0, 0.3]);
    }

    #[test]
    fn floating_component_is_singular() {
        let cloud = chain(&[0.0, 0.1, 50.0, 50.1, 50.2]);
        let kernel = KernelSpec::gaussian(0.01, 1);
        match solve_constrained_laplace(&cloud, &kernel, &[1.0; 5], &[0], &[1.0], &SolveOptions::default()) {
            Err(PimError::Singular { component_sizes }) => assert_eq!(component_sizes, vec![3]),
            other => panic!("expected singular, got {other:?}"),
        }
    }

    #[test]
    fn constant_field_has_zero_gradient() {
        let cloud = chain(&[0.0, 0.3, 0.5, 1.1]);
        let g = nonlocal_gradient(&cloud, &KernelSpec::gaussian(0.2, 1), &[2.0; 4]).unwrap();
        assert!(g.iter().all(|v| v[0] == 0.0));
    }

    #[test]
    fn knn_rows_and_bandwidth() {
        let cloud = chain(&[0.0, 1.0, 3.0, 7.0]);
        let kernel = KernelSpec::new(crate::kernel::KernelFamily::Gaussian, Bandwidth::Global(1.0), 1);
        let g = WeightGraph::knn(&cloud, &kernel, 2).unwrap();
        assert_eq!(g.row(0), &[(1, 1.0), (2, 9.0)]);
        assert_eq!(g.bandwidth()[3], 36.0);
        for i in 0..4 {
            for &(j, w) in g.edges(i) {
                let back = g.edges(j).iter().find(|e| e.0 == i).unwrap().1;
                assert_eq!(w, back);
            }
        }
    }
}
