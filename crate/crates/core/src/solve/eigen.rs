//! Generalized eigenpairs `A v = λ M v` nearest a shift, by block
//! Rayleigh–Ritz on the Krylov space of `(A − σM)⁻¹ M`.

use super::krylov::{dot, norm2};
use super::SolveOptions;
use crate::assembly::OperatorBundle;
use crate::error::{PimError, Result};
use crate::sparse::CsrMatrix;
use faer::prelude::Solve;
use faer::{c64, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BLOCK: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    /// Normalized to `|vᵀ M v| = 1`, largest-magnitude entry positive.
    pub vector: Vec<f64>,
    /// `‖A v − λ M v‖ / ‖M v‖`.
    pub residual: f64,
}

/// The `eig_count` eigenpairs of `(L [+ B], M)` closest to the shift,
/// sorted ascending. Neumann bundles give `λ₁ ≈ 0` with a constant vector.
pub fn solve_eigs(bundle: &OperatorBundle, options: &SolveOptions) -> Result<Vec<EigenPair>> {
    options.validate()?;
    let a = bundle.system_matrix();
    generalized_eigs(&a, &bundle.mass, options.eig_count, options.eig_shift, options.eig_tol)
}

/// Default shift: small and negative relative to the pencil scale, so the
/// factorization stays well conditioned while every wanted eigenvalue lies above it.
pub fn default_shift(a: &CsrMatrix, m: &CsrMatrix) -> f64 {
    let mn = m.norm_inf();
    if mn == 0.0 {
        return -1e-3;
    }
    -1e-3 * a.norm_inf() / mn
}

pub fn generalized_eigs(
    a: &CsrMatrix,
    m: &CsrMatrix,
    nev: usize,
    shift: Option<f64>,
    tol: f64,
) -> Result<Vec<EigenPair>> {
    let n = a.nrows();
    if m.nrows() != n {
        return Err(PimError::Dimension {
            what: "mass matrix",
            expected: n,
            got: m.nrows(),
        });
    }
    if nev == 0 || nev >= n {
        return Err(PimError::Validation(format!("eig_count must be in 1..{n}, got {nev}")));
    }
    let sigma = shift.unwrap_or_else(|| default_shift(a, m));
    let shifted = CsrMatrix::linear_combination(1.0, a, -sigma, m).to_faer();
    let lu = shifted
        .sp_lu()
        .map_err(|e| PimError::Numeric(format!("factorization of A - {sigma:e} M failed: {e:?}")))?;
    let op = |x: &[f64], y: &mut [f64]| {
        let mx = m.mul_vec(x);
        let mut rhs = Mat::from_fn(n, 1, |i, _| mx[i]);
        lu.solve_in_place(&mut rhs);
        for (i, y) in y.iter_mut().enumerate() {
            *y = rhs[(i, 0)];
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut dim = (2 * nev + 30).max(3 * nev).min(n);
    loop {
        let (basis, images) = block_krylov(&op, n, dim, &mut rng);
        let k = basis.len();
        let h = Mat::from_fn(k, k, |i, j| dot(&basis[i], &images[j]));
        let evd = h
            .eigen()
            .map_err(|e| PimError::Numeric(format!("projected eigenproblem failed: {e:?}")))?;
        let s = evd.S().column_vector();
        let u = evd.U();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&i, &j| s[j].norm().total_cmp(&s[i].norm()));

        let mut pairs = Vec::with_capacity(nev);
        let mut converged = true;
        for &idx in order.iter().take(nev) {
            let theta = s[idx];
            if theta.norm() == 0.0 {
                converged = false;
                break;
            }
            let lambda = c64::new(sigma, 0.0) + c64::new(1.0, 0.0) / theta;
            // Ritz vector, rotated so its largest entry is real
            let mut xr = vec![0.0; n];
            let mut xi = vec![0.0; n];
            for (j, v) in basis.iter().enumerate() {
                let c = u[(j, idx)];
                for ((r, im), b) in xr.iter_mut().zip(xi.iter_mut()).zip(v) {
                    *r += c.re * b;
                    *im += c.im * b;
                }
            }
            let big = (0..n)
                .max_by(|&i, &j| (xr[i].hypot(xi[i])).total_cmp(&xr[j].hypot(xi[j])))
                .unwrap();
            let phase = c64::new(xr[big], -xi[big]) / xr[big].hypot(xi[big]);
            for (r, im) in xr.iter_mut().zip(xi.iter_mut()) {
                let z = c64::new(*r, *im) * phase;
                *r = z.re;
                *im = z.im;
            }
            let res = complex_residual(a, m, lambda, &xr, &xi);
            if !(res <= tol) {
                converged = false;
                break;
            }
            pairs.push((lambda, xr));
        }
        if converged {
            let mut out = Vec::with_capacity(nev);
            for (lambda, x) in pairs {
                if lambda.im.abs() > 1e-10 * (lambda.norm() + sigma.abs()) {
                    return Err(PimError::SpectralAnomaly {
                        re: lambda.re,
                        im: lambda.im,
                    });
                }
                out.push(finish(a, m, lambda.re, x));
            }
            out.sort_by(|p, q| p.value.total_cmp(&q.value));
            return Ok(out);
        }
        if dim >= n {
            return Err(PimError::NotConverged {
                iterations: dim,
                residual: f64::NAN,
            });
        }
        dim = (dim * 2).min(n);
    }
}

fn finish(a: &CsrMatrix, m: &CsrMatrix, lambda: f64, mut x: Vec<f64>) -> EigenPair {
    let mx = m.mul_vec(&x);
    let scale = dot(&x, &mx).abs().sqrt();
    let big = (0..x.len()).max_by(|&i, &j| x[i].abs().total_cmp(&x[j].abs())).unwrap();
    let s = if x[big] < 0.0 { -1.0 / scale } else { 1.0 / scale };
    x.iter_mut().for_each(|v| *v *= s);
    let ax = a.mul_vec(&x);
    let mx = m.mul_vec(&x);
    let r: Vec<f64> = ax.iter().zip(&mx).map(|(p, q)| p - lambda * q).collect();
    EigenPair {
        value: lambda,
        residual: norm2(&r) / norm2(&mx),
        vector: x,
    }
}

fn complex_residual(a: &CsrMatrix, m: &CsrMatrix, lambda: c64, xr: &[f64], xi: &[f64]) -> f64 {
    let (axr, axi) = (a.mul_vec(xr), a.mul_vec(xi));
    let (mxr, mxi) = (m.mul_vec(xr), m.mul_vec(xi));
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..xr.len() {
        let re = axr[i] - lambda.re * mxr[i] + lambda.im * mxi[i];
        let im = axi[i] - lambda.re * mxi[i] - lambda.im * mxr[i];
        num += re * re + im * im;
        den += mxr[i] * mxr[i] + mxi[i] * mxi[i];
    }
    (num / den).sqrt()
}

/// Orthonormal basis of the block Krylov space with its images under `op`.
fn block_krylov(
    op: &impl Fn(&[f64], &mut [f64]),
    n: usize,
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
    let mut images: Vec<Vec<f64>> = Vec::with_capacity(dim);
    let mut pending: Vec<Vec<f64>> = (0..BLOCK).map(|_| random_vec(n, rng)).collect();
    let mut stalls = 0;
    while basis.len() < dim {
        let mut added = 0;
        for mut v in std::mem::take(&mut pending) {
            if basis.len() >= dim {
                break;
            }
            let before = norm2(&v);
            if before == 0.0 {
                continue;
            }
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(&v, b);
                    v.iter_mut().zip(b).for_each(|(v, b)| *v -= c * b);
                }
            }
            let after = norm2(&v);
            if after <= 1e-10 * before {
                continue;
            }
            v.iter_mut().for_each(|x| *x /= after);
            let mut w = vec![0.0; n];
            op(&v, &mut w);
            basis.push(v);
            images.push(w);
            added += 1;
        }
        let start = basis.len() - added;
        pending = images[start..].to_vec();
        if added == 0 {
            // invariant subspace reached; continue from fresh directions
            stalls += 1;
            if stalls > n {
                break;
            }
            pending = (0..BLOCK).map(|_| random_vec(n, rng)).collect();
        }
    }
    (basis, images)
}

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen::<f64>() - 0.5).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_ring(n: usize) -> CsrMatrix {
        let rows = (0..n)
            .map(|i| vec![(i, 2.0), ((i + 1) % n, -1.0), ((i + n - 1) % n, -1.0)])
            .collect();
        CsrMatrix::from_rows(n, rows)
    }

    #[test]
    fn ring_laplacian_spectrum_with_multiplicity() {
        let n = 64;
        let a = laplacian_ring(n);
        let m = CsrMatrix::from_rows(n, (0..n).map(|i| vec![(i, 1.0)]).collect());
        let pairs = generalized_eigs(&a, &m, 7, None, 1e-10).unwrap();
        let exact = |k: usize| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos();
        let expect = [exact(0), exact(1), exact(1), exact(2), exact(2), exact(3), exact(3)];
        for (p, e) in pairs.iter().zip(expect) {
            assert!((p.value - e).abs() < 1e-9, "{} vs {e}", p.value);
            assert!(p.residual < 1e-9);
        }
        assert!(pairs[0].value.abs() < 1e-12);
    }

    #[test]
    fn nonsymmetric_pencil_matches_dense() {
        let n = 40;
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| {
                let mut r = vec![(i, 3.0 + i as f64 * 0.1)];
                if i > 0 {
                    r.push((i - 1, -1.2));
                }
                if i + 1 < n {
                    r.push((i + 1, -0.8));
                }
                r
            })
            .collect();
        let a = CsrMatrix::from_rows(n, rows);
        let m = CsrMatrix::from_rows(n, (0..n).map(|i| vec![(i, 1.0 + 0.01 * i as f64)]).collect());
        let pairs = generalized_eigs(&a, &m, 4, Some(0.0), 1e-10).unwrap();
        let dense = Mat::from_fn(n, n, |i, j| a.get(i, j) / m.get(i, i));
        let mut all: Vec<f64> = dense
            .eigen()
            .unwrap()
            .S()
            .column_vector()
            .iter()
            .map(|z| z.re)
            .collect();
        all.sort_by(f64::total_cmp);
        for (p, e) in pairs.iter().zip(&all) {
            assert!((p.value - e).abs() < 1e-9 * e.abs().max(1.0));
        }
    }
}
