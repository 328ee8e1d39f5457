//! Compressed sparse row storage.

use std::io::Write;

use rayon::prelude::*;

const PAR_ROWS: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists. Duplicate columns are summed.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let nrows = rows.len();
        let mut indptr = Vec::with_capacity(nrows + 1);
        indptr.push(0);
        let nnz: usize = rows.iter().map(Vec::len).sum();
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for mut row in rows {
            row.sort_unstable_by_key(|e| e.0);
            let start = indices.len();
            for (j, v) in row {
                assert!(j < ncols, "column {j} out of range");
                if indices.len() > start && *indices.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let ncols = rows.first().map_or(0, Vec::len);
        CsrMatrix::from_rows(
            ncols,
            rows.iter()
                .map(|r| {
                    r.iter()
                        .enumerate()
                        .filter(|e| *e.1 != 0.0)
                        .map(|(j, &v)| (j, v))
                        .collect()
                })
                .collect(),
        )
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.values[r])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        let row_dot = |i: usize| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum::<f64>()
        };
        if self.nrows >= PAR_ROWS {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = row_dot(i));
        } else {
            y.iter_mut().enumerate().for_each(|(i, yi)| *yi = row_dot(i));
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// `diag(d) A`.
    pub fn scale_rows(&self, d: &[f64]) -> CsrMatrix {
        assert_eq!(d.len(), self.nrows);
        let mut out = self.clone();
        for i in 0..self.nrows {
            for v in &mut out.values[self.indptr[i]..self.indptr[i + 1]] {
                *v *= d[i];
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> CsrMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `a A + b B` for matrices of the same shape.
    pub fn linear_combination(a: f64, lhs: &CsrMatrix, b: f64, rhs: &CsrMatrix) -> CsrMatrix {
        assert_eq!((lhs.nrows, lhs.ncols), (rhs.nrows, rhs.ncols));
        let rows = (0..lhs.nrows)
            .map(|i| {
                let (c1, v1) = lhs.row(i);
                let (c2, v2) = rhs.row(i);
                c1.iter()
                    .zip(v1)
                    .map(|(&j, &v)| (j, a * v))
                    .chain(c2.iter().zip(v2).map(|(&j, &v)| (j, b * v)))
                    .collect()
            })
            .collect();
        CsrMatrix::from_rows(lhs.ncols, rows)
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.ncols];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                rows[j].push((i, v));
            }
        }
        CsrMatrix::from_rows(self.nrows, rows)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `max |A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let diff = CsrMatrix::linear_combination(1.0, self, -1.0, &t);
        diff.max_abs()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] = v;
            }
        }
        d
    }

    /// Column-compressed copy for the sparse direct solvers.
    pub fn to_faer(&self) -> faer::sparse::SparseColMat<usize, f64> {
        use faer::sparse::{SparseColMat, Triplet};
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                triplets.push(Triplet::new(i, j, v));
            }
        }
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &triplets).expect("valid triplets")
    }

    /// Matrix Market coordinate format.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
            }
        }
        Ok(())
    }
}

/// Zero-fill incomplete LU factorization, `A ≈ (I + L) U` on the pattern of `A`.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    factors: CsrMatrix,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Option<Self> {
        let n = a.nrows;
        let mut f = a.clone();
        let mut diag_pos = vec![usize::MAX; n];
        for (i, dp) in diag_pos.iter_mut().enumerate() {
            let (cols, _) = a.row(i);
            *dp = a.indptr[i] + cols.binary_search(&i).ok()?;
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (f.indptr[i], f.indptr[i + 1]);
            for k in start..end {
                pos[f.indices[k]] = k;
            }
            for k in start..diag_pos[i] {
                let j = f.indices[k];
                let ujj = f.values[diag_pos[j]];
                let lij = f.values[k] / ujj;
                f.values[k] = lij;
                for m in diag_pos[j] + 1..f.indptr[j + 1] {
                    let c = f.indices[m];
                    if pos[c] != usize::MAX {
                        let p = pos[c];
                        f.values[p] -= lij * f.values[m];
                    }
                }
            }
            if f.values[diag_pos[i]] == 0.0 || !f.values[diag_pos[i]].is_finite() {
                return None;
            }
            for k in start..end {
                pos[f.indices[k]] = usize::MAX;
            }
        }
        Some(Ilu0 { factors: f, diag_pos })
    }

    /// Overwrites `x` with `(LU)^{-1} x`.
    pub fn apply(&self, x: &mut [f64]) {
        let f = &self.factors;
        let n = f.nrows;
        for i in 0..n {
            let mut s = x[i];
            for k in f.indptr[i]..self.diag_pos[i] {
                s -= f.values[k] * x[f.indices[k]];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in self.diag_pos[i] + 1..f.indptr[i + 1] {
                s -= f.values[k] * x[f.indices[k]];
            }
            x[i] = s / f.values[self.diag_pos[i]];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ilu0_is_exact_for_tridiagonal() {
        let n = 6;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| match (i as i64 - j as i64).abs() {
                        0 => 4.0,
                        1 => -1.0 - 0.1 * (i as f64),
                        _ => 0.0,
                    })
                    .collect()
            })
            .collect();
        let a = CsrMatrix::from_dense(&rows);
        let ilu = Ilu0::new(&a).unwrap();
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut y = a.mul_vec(&x);
        ilu.apply(&mut y);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn duplicates_are_summed() {
        let a = CsrMatrix::from_rows(2, vec![vec![(1, 1.0), (0, 2.0), (1, 3.0)], vec![]]);
        assert_eq!(a.get(0, 1), 4.0);
        assert_eq!(a.get(0, 0), 2.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn transpose_and_asymmetry() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 2.0], vec![2.5, 0.0]]);
        assert_eq!(a.transpose().to_dense(), vec![vec![1.0, 2.5], vec![2.0, 0.0]]);
        assert!((a.asymmetry() - 0.5).abs() < 1e-15);
    }
}
