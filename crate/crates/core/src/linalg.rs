//! Small dense linear algebra: row-major matrices, symmetric eigensolver
//! (Householder tridiagonalization + implicit QL), LU with partial pivoting,
//! and Cholesky.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    /// Single-column matrix.
    pub fn column_vector(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a != 0.0 {
                    axpy(a, other.row(k), dst);
                }
            }
        }
        out
    }

    /// Rows selected by `idx`, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Mat {
        let mut out = Mat::zeros(idx.len(), self.cols);
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(self.row(i));
        }
        out
    }

    /// Columns selected by `idx`, in order.
    pub fn select_columns(&self, idx: &[usize]) -> Mat {
        let mut out = Mat::zeros(self.rows, idx.len());
        for i in 0..self.rows {
            for (c, &j) in idx.iter().enumerate() {
                out[(i, c)] = self[(i, j)];
            }
        }
        out
    }

    /// Horizontal concatenation.
    pub fn hstack(&self, other: &Mat) -> Result<Mat> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "hstack of {} and {} rows",
                self.rows, other.rows
            )));
        }
        let mut out = Mat::zeros(self.rows, self.cols + other.cols);
        for i in 0..self.rows {
            let r = out.row_mut(i);
            r[..self.cols].copy_from_slice(self.row(i));
            r[self.cols..].copy_from_slice(other.row(i));
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows)
                .all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Row `k` is the unit eigenvector for `values[k]`; empty when only
    /// eigenvalues were requested.
    pub vectors: Vec<Vec<f64>>,
}

/// Householder reduction of a symmetric matrix to tridiagonal form.
struct Tridiagonal {
    diag: Vec<f64>,
    off: Vec<f64>,
    // (start index, tau, v) per reflector; H = I - tau v v^T on indices start..n
    reflectors: Vec<(usize, f64, Vec<f64>)>,
}

fn tridiagonalize(a: &Mat, keep_reflectors: bool) -> Tridiagonal {
    let n = a.rows();
    let mut b = a.as_slice().to_vec();
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n];
    let mut reflectors = Vec::new();
    let mut p = vec![0.0; n];
    for k in 0..n.saturating_sub(2) {
        let start = k + 1;
        let len = n - start;
        let x: Vec<f64> = b[k * n + start..k * n + n].to_vec();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        diag[k] = b[k * n + k];
        if norm == 0.0 {
            off[k] = 0.0;
            continue;
        }
        let alpha = if x[0] > 0.0 { -norm } else { norm };
        let mut v = x;
        v[0] -= alpha;
        let vnorm2 = v.iter().map(|t| t * t).sum::<f64>();
        off[k] = alpha;
        if vnorm2 == 0.0 {
            continue;
        }
        let tau = 2.0 / vnorm2;
        // p = tau * B v over the trailing block
        for (i, pi) in p[..len].iter_mut().enumerate() {
            let row = &b[(start + i) * n + start..(start + i) * n + n];
            *pi = tau * dot(row, &v);
        }
        let kcoef = 0.5 * tau * dot(&p[..len], &v);
        for (pi, vi) in p[..len].iter_mut().zip(&v) {
            *pi -= kcoef * vi;
        }
        for i in 0..len {
            let (vi, wi) = (v[i], p[i]);
            let row = &mut b[(start + i) * n + start..(start + i) * n + n];
            for ((bij, vj), wj) in row.iter_mut().zip(&v).zip(&p[..len]) {
                *bij -= vi * wj + wi * vj;
            }
        }
        if keep_reflectors {
            reflectors.push((start, tau, v));
        }
    }
    if n >= 2 {
        diag[n - 2] = b[(n - 2) * n + n - 2];
        off[n - 2] = b[(n - 2) * n + n - 1];
    }
    if n >= 1 {
        diag[n - 1] = b[(n - 1) * n + n - 1];
        off[n - 1] = 0.0;
    }
    Tridiagonal {
        diag,
        off,
        reflectors,
    }
}

/// Implicit QL on a symmetric tridiagonal matrix. `off[i]` couples `i` and
/// `i+1`. When `zt` is given, its rows are rotated alongside so that row `i`
/// ends as the eigenvector for `diag[i]` in the basis `zt` started in.
fn tridiagonal_ql(diag: &mut [f64], off: &mut [f64], mut zt: Option<&mut Mat>) -> Result<()> {
    let n = diag.len();
    const MAX_ITER: usize = 60;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_ITER {
                return Err(Error::EigenNoConvergence {
                    residual: off[l].abs(),
                });
            }
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + off[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut early = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    early = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = zt.as_deref_mut() {
                    let cols = z.cols();
                    let (head, tail) = z.data.split_at_mut((i + 1) * cols);
                    let zi = &mut head[i * cols..];
                    let zi1 = &mut tail[..cols];
                    for (a, bb) in zi.iter_mut().zip(zi1.iter_mut()) {
                        let f = *bb;
                        *bb = s * *a + c * f;
                        *a = c * *a - s * f;
                    }
                }
            }
            if early {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
    Ok(())
}

fn check_square_symmetric(a: &Mat) -> Result<()> {
    if a.rows() != a.cols() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} matrix is not square",
            a.rows(),
            a.cols()
        )));
    }
    if a.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(crate::error::invalid("matrix", "non-finite entry"));
    }
    Ok(())
}

/// All eigenvalues of a symmetric matrix, sorted descending.
pub fn symmetric_eigenvalues(a: &Mat) -> Result<Vec<f64>> {
    check_square_symmetric(a)?;
    let Tridiagonal {
        mut diag, mut off, ..
    } = tridiagonalize(a, false);
    tridiagonal_ql(&mut diag, &mut off, None)?;
    diag.sort_by(|x, y| y.total_cmp(x));
    Ok(diag)
}

/// Full eigen-decomposition of a symmetric matrix.
pub fn symmetric_eigen(a: &Mat) -> Result<SymmetricEigen> {
    check_square_symmetric(a)?;
    let n = a.rows();
    let Tridiagonal {
        mut diag,
        mut off,
        reflectors,
    } = tridiagonalize(a, true);
    let mut zt = Mat::identity(n);
    tridiagonal_ql(&mut diag, &mut off, Some(&mut zt))?;
    // back-transform each eigenvector (a row of zt) through Q = H_0 ... H_{n-3}
    for r in 0..n {
        let row = zt.row_mut(r);
        for (start, tau, v) in reflectors.iter().rev() {
            let seg = &mut row[*start..];
            let coef = tau * dot(seg, v);
            if coef != 0.0 {
                for (x, vi) in seg.iter_mut().zip(v) {
                    *x -= coef * vi;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]).then(i.cmp(&j)));
    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let vectors: Vec<Vec<f64>> = order.iter().map(|&i| zt.row(i).to_vec()).collect();
    let scale = a.frobenius_norm().max(1.0);
    let residual = values
        .iter()
        .zip(&vectors)
        .map(|(&lam, v)| {
            a.matvec(v)
                .iter()
                .zip(v)
                .map(|(av, vi)| (av - lam * vi).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max);
    if !(residual <= 1e-8 * scale) {
        return Err(Error::EigenNoConvergence { residual });
    }
    Ok(SymmetricEigen { values, vectors })
}

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
pub fn lu_solve(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} system with {} right-hand values",
            a.rows(),
            a.cols(),
            b.len()
        )));
    }
    let mut m = a.as_slice().to_vec();
    let mut x = b.to_vec();
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
    let tol = n as f64 * f64::EPSILON * scale;
    for k in 0..n {
        let (piv, pval) = (k..n)
            .map(|i| (i, m[i * n + k].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pval <= tol {
            return Err(Error::Singular);
        }
        if piv != k {
            for j in 0..n {
                m.swap(k * n + j, piv * n + j);
            }
            x.swap(k, piv);
        }
        let pivot = m[k * n + k];
        let (upper, lower) = m.split_at_mut((k + 1) * n);
        let krow = &upper[k * n..];
        for i in 0..n - k - 1 {
            let row = &mut lower[i * n..(i + 1) * n];
            let factor = row[k] / pivot;
            if factor != 0.0 {
                for j in k..n {
                    row[j] -= factor * krow[j];
                }
                x[k + 1 + i] -= factor * x[k];
            }
        }
    }
    for k in (0..n).rev() {
        let row = &m[k * n..(k + 1) * n];
        let s: f64 = (k + 1..n).map(|j| row[j] * x[j]).sum();
        x[k] = (x[k] - s) / row[k];
    }
    Ok(x)
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: &Mat) -> Result<Mat> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch("cholesky of non-square matrix".into()));
    }
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let s: f64 = (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum();
        let d = a[(j, j)] - s;
        if !(d > 0.0) {
            return Err(Error::Singular);
        }
        l[(j, j)] = d.sqrt();
        for i in j + 1..n {
            let s: f64 = (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum();
            l[(i, j)] = (a[(i, j)] - s) / l[(j, j)];
        }
    }
    Ok(l)
}

/// Solve `L L^T x = b` given the Cholesky factor.
pub fn cholesky_solve(l: &Mat, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[(i, k)] * y[k]).sum();
        y[i] = (b[i] - s) / l[(i, i)];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[(k, i)] * x[k]).sum();
        x[i] = (y[i] - s) / l[(i, i)];
    }
    x
}
