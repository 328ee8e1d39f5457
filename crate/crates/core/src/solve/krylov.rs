//! Krylov iterations: preconditioned conjugate gradients for symmetric
//! semidefinite systems and restarted right-preconditioned GMRES.

use rayon::prelude::*;

const PAR_LEN: usize = 4096;

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    if a.len() >= PAR_LEN {
        // fixed chunking keeps the reduction order independent of the thread count
        a.par_chunks(1024)
            .zip(b.par_chunks(1024))
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
            .collect::<Vec<f64>>()
            .into_iter()
            .sum()
    } else {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}

#[inline]
pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

#[derive(Debug, Clone)]
pub struct KrylovOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative residual after each iteration (first entry is the initial one).
    pub history: Vec<f64>,
    pub converged: bool,
}

/// Preconditioned CG for `A x = b` with `A` symmetric positive semidefinite.
///
/// `project` is applied to every residual; for a singular `A` with known
/// null space it keeps the residual in the range of `A`.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    precond: impl Fn(&[f64], &mut [f64]),
    project: impl Fn(&mut [f64]),
    b: &[f64],
    x0: Option<&[f64]>,
    rel_tol: f64,
    max_iter: usize,
) -> KrylovOutcome {
    let n = b.len();
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return KrylovOutcome {
            x: vec![0.0; n],
            iterations: 0,
            history: vec![0.0],
            converged: true,
        };
    }
    let mut r = vec![0.0; n];
    apply(&x, &mut r);
    r.iter_mut().zip(b).for_each(|(r, b)| *r = b - *r);
    project(&mut r);
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut history = vec![norm2(&r) / bnorm];
    let mut iterations = 0;
    while *history.last().unwrap() > rel_tol && iterations < max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        project(&mut r);
        iterations += 1;
        history.push(norm2(&r) / bnorm);
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    let converged = *history.last().unwrap() <= rel_tol;
    KrylovOutcome {
        x,
        iterations,
        history,
        converged,
    }
}

/// Restarted GMRES with right preconditioning, `A M⁻¹ y = b`, `x = M⁻¹ y`.
pub fn gmres(
    apply: impl Fn(&[f64], &mut [f64]),
    precond: impl Fn(&mut [f64]),
    b: &[f64],
    x0: Option<&[f64]>,
    rel_tol: f64,
    restart: usize,
    max_iter: usize,
) -> KrylovOutcome {
    let n = b.len();
    let restart = restart.max(1).min(n.max(1));
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return KrylovOutcome {
            x: vec![0.0; n],
            iterations: 0,
            history: vec![0.0],
            converged: true,
        };
    }
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let residual = |x: &[f64], r: &mut Vec<f64>| {
        apply(x, r);
        r.iter_mut().zip(b).for_each(|(r, b)| *r = b - *r);
    };
    residual(&x, &mut r);
    let mut history = vec![norm2(&r) / bnorm];
    let mut iterations = 0;

    while *history.last().unwrap() > rel_tol && iterations < max_iter {
        let beta = norm2(&r);
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k = 0;
        while k < restart && iterations < max_iter {
            let mut z = basis[k].clone();
            precond(&mut z);
            apply(&z, &mut w);
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(&w, v);
                    h[i][k] += c;
                    axpy(-c, v, &mut w);
                }
            }
            let hn = norm2(&w);
            h[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            if denom == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = h[k][k] / denom;
                sn[k] = h[k + 1][k] / denom;
            }
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            iterations += 1;
            k += 1;
            history.push(g[k].abs() / bnorm);
            if g[k].abs() / bnorm <= rel_tol || hn <= 1e-300 {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        // back substitution on the k×k triangle
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        let mut update = vec![0.0; n];
        for (yi, v) in y.iter().zip(&basis) {
            axpy(*yi, v, &mut update);
        }
        precond(&mut update);
        axpy(1.0, &update, &mut x);
        residual(&x, &mut r);
        let true_res = norm2(&r) / bnorm;
        *history.last_mut().unwrap() = true_res;
        if !true_res.is_finite() {
            break;
        }
    }
    let converged = *history.last().unwrap() <= rel_tol;
    KrylovOutcome {
        x,
        iterations,
        history,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{CsrMatrix, Ilu0};

    fn poisson_1d(n: usize, shift: f64, skew: f64) -> CsrMatrix {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, 2.0 + shift)];
                if i > 0 {
                    r.push((i - 1, -1.0 - skew));
                }
                if i + 1 < n {
                    r.push((i + 1, -1.0 + skew));
                }
                r
            })
            .collect();
        CsrMatrix::from_rows(n, rows)
    }

    #[test]
    fn cg_solves_spd() {
        let a = poisson_1d(50, 0.1, 0.0);
        let x_true: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).cos()).collect();
        let b = a.mul_vec(&x_true);
        let out = conjugate_gradient(
            |x, y| a.mul_vec_into(x, y),
            |r, z| z.copy_from_slice(r),
            |_| {},
            &b,
            None,
            1e-12,
            500,
        );
        assert!(out.converged);
        for (u, v) in out.x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn gmres_solves_nonsymmetric() {
        let a = poisson_1d(80, 0.05, 0.3);
        let x_true: Vec<f64> = (0..80).map(|i| (i as f64 * 0.1).sin() + 0.5).collect();
        let b = a.mul_vec(&x_true);
        let ilu = Ilu0::new(&a).unwrap();
        let out = gmres(|x, y| a.mul_vec_into(x, y), |v| ilu.apply(v), &b, None, 1e-12, 20, 400);
        assert!(out.converged, "{:?}", out.history.last());
        for (u, v) in out.x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-9);
        }
        let plain = gmres(|x, y| a.mul_vec_into(x, y), |_| {}, &b, None, 1e-10, 10, 2000);
        assert!(plain.converged);
    }
}
