//! Dense kernels for the small matrices that show up in system evaluation:
//! cyclic Jacobi symmetric eigendecomposition, one-sided Jacobi SVD, the
//! PSD square root and LU solves with a condition check.

use std::fmt;
use std::ops::{Index, IndexMut};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is {rows}x{cols}, expected a square matrix")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: max |A - A^T| = {violation:e}")]
    NotSymmetric { violation: f64 },
    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue:e}")]
    NotPsd { eigenvalue: f64 },
    #[error("linear system is singular (condition estimate {condition:e})")]
    Singular { condition: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite entry in input")]
    NonFinite,
}

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    /// Builds a matrix from row-major data. Panics if `data.len() != rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data has wrong length");
        Self { rows, cols, data }
    }

    /// Builds a matrix from nested rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { rows: rows.len(), cols, data }
    }

    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Self {
        let mut m = Self::zeros(rows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            assert_eq!(c.len(), rows);
            for i in 0..rows {
                m[(i, j)] = c[i];
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.data[k * other.cols + j];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `Aᵀ v` without forming the transpose.
    pub fn tr_matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "tr_matvec dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a * s).collect() }
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn norm_max(&self) -> f64 {
        self.data.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    fn norm_one(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest entry of `|A - Aᵀ|`; `None` for non-square input.
    pub fn asymmetry(&self) -> Option<f64> {
        if !self.is_square() {
            return None;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        Some(worst)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, a| m.max(a.abs()))
}

pub fn sub_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Symmetric eigendecomposition `A = V diag(values) Vᵀ`, values descending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Eigenvectors stored as columns.
    pub vectors: Matrix,
}

/// Thin singular value decomposition `A = U diag(values) Vt`, values descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub values: Vec<f64>,
    pub u: Matrix,
    pub vt: Matrix,
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// `tol` bounds the accepted asymmetry `max |A - Aᵀ|`, scaled by `max(1, ‖A‖_max)`.
pub fn sym_eig(a: &Matrix, tol: f64) -> Result<SymEigen, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare { rows: a.rows, cols: a.cols });
    }
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let n = a.rows;
    let asym = a.asymmetry().unwrap_or(0.0);
    if asym > tol * a.norm_max().max(1.0) {
        return Err(LinalgError::NotSymmetric { violation: asym });
    }
    // Work on the symmetrized copy.
    let mut m = a.add(&a.transpose()).scale(0.5);
    let mut v = Matrix::identity(n);

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        let diag: f64 = (0..n).map(|i| m[(i, i)] * m[(i, i)]).sum();
        if off <= f64::EPSILON * f64::EPSILON * (diag + off) || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (new_j, &old_j) in order.iter().enumerate() {
        for i in 0..n {
            vectors[(i, new_j)] = v[(i, old_j)];
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Non-negative square root of a symmetric positive semidefinite matrix.
///
/// Eigenvalues in `[-1e-10·‖A‖, 0)` are clamped to zero.
pub fn sqrt_psd(a: &Matrix) -> Result<Matrix, LinalgError> {
    let eig = sym_eig(a, 1e-10)?;
    let scale = a.norm_fro();
    let n = a.rows;
    let mut roots = Vec::with_capacity(n);
    for &l in &eig.values {
        if l < -1e-10 * scale {
            return Err(LinalgError::NotPsd { eigenvalue: l });
        }
        roots.push(l.max(0.0).sqrt());
    }
    let v = &eig.vectors;
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let val: f64 = (0..n).map(|k| v[(i, k)] * roots[k] * v[(j, k)]).sum();
            s[(i, j)] = val;
            s[(j, i)] = val;
        }
    }
    Ok(s)
}

/// One-sided Jacobi SVD.
pub fn svd(a: &Matrix) -> Result<Svd, LinalgError> {
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    if a.rows < a.cols {
        let t = svd(&a.transpose())?;
        return Ok(Svd { values: t.values, u: t.vt.transpose(), vt: t.u.transpose() });
    }
    let (m, n) = (a.rows, a.cols);
    // Columns of `w` converge to U·diag(σ); `v` accumulates the rotations.
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut w, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma: Vec<f64> = w.iter().map(|c| norm2(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));
    let smax = order.first().map_or(0.0, |&i| sigma[i]);

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    let mut vt = Matrix::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        let s = sigma[j];
        // Columns that collapsed to rounding noise get a completed basis vector instead.
        let usable = s > 0.0 && s > smax * f64::EPSILON * (m.max(n) as f64);
        if usable {
            u_cols.push(w[j].iter().map(|x| x / s).collect());
        } else {
            sigma[j] = if s.is_finite() { s } else { 0.0 };
            u_cols.push(Vec::new());
        }
        values.push(sigma[j]);
        for i in 0..n {
            vt[(k, i)] = v[j][i];
        }
    }
    complete_orthonormal(&mut u_cols, m);
    Ok(Svd { values, u: Matrix::from_columns(m, &u_cols), vt })
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Fills empty entries of `cols` with unit vectors orthogonal to the others.
fn complete_orthonormal(cols: &mut [Vec<f64>], m: usize) {
    for k in 0..cols.len() {
        if !cols[k].is_empty() {
            continue;
        }
        let mut best: Option<Vec<f64>> = None;
        let mut best_norm = 0.0;
        for e in 0..m {
            let mut cand = vec![0.0; m];
            cand[e] = 1.0;
            for other in cols.iter().filter(|c| !c.is_empty()) {
                let d = dot(&cand, other);
                for (ci, oi) in cand.iter_mut().zip(other) {
                    *ci -= d * oi;
                }
            }
            let nrm = norm2(&cand);
            if nrm > best_norm {
                best_norm = nrm;
                best = Some(cand);
            }
        }
        if let Some(b) = best {
            cols[k] = b.iter().map(|x| x / best_norm).collect();
        } else {
            cols[k] = vec![0.0; m];
        }
    }
}

/// Solves `A x = b` by LU with partial pivoting.
///
/// Fails when the 1-norm condition number exceeds `1e14`.
pub fn solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let lu = Lu::factor(a)?;
    if b.len() != a.rows {
        return Err(LinalgError::DimensionMismatch { expected: a.rows, got: b.len() });
    }
    let cond = lu.condition_estimate(a.norm_one());
    if !(cond <= 1e14) {
        return Err(LinalgError::Singular { condition: cond });
    }
    Ok(lu.solve(b))
}

struct Lu {
    n: usize,
    lu: Matrix,
    perm: Vec<usize>,
    singular: bool,
}

impl Lu {
    fn factor(a: &Matrix) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::NotSquare { rows: a.rows, cols: a.cols });
        }
        if !a.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut singular = false;
        for k in 0..n {
            let (piv, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax == 0.0 {
                singular = true;
                continue;
            }
            if piv != k {
                perm.swap(piv, k);
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(piv, j)];
                    lu[(piv, j)] = tmp;
                }
            }
            let d = lu[(k, k)];
            for i in (k + 1)..n {
                let l = lu[(i, k)] / d;
                lu[(i, k)] = l;
                if l != 0.0 {
                    for j in (k + 1)..n {
                        lu[(i, j)] -= l * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm, singular })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[(i, j)] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = ((i + 1)..n).map(|j| self.lu[(i, j)] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[(i, i)];
        }
        x
    }

    /// `‖A‖₁ ‖A⁻¹‖₁`, with the inverse norm computed column by column.
    fn condition_estimate(&self, a_norm: f64) -> f64 {
        if self.singular {
            return f64::INFINITY;
        }
        let mut inv_norm = 0.0f64;
        let mut e = vec![0.0; self.n];
        for j in 0..self.n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            inv_norm = inv_norm.max(col.iter().map(|v| v.abs()).sum());
        }
        let c = a_norm * inv_norm;
        if c.is_finite() {
            c
        } else {
            f64::INFINITY
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn reconstruct_eig(e: &SymEigen) -> Matrix {
        let d = Matrix::from_diag(&e.values);
        e.vectors.matmul(&d).matmul(&e.vectors.transpose())
    }

    #[test]
    fn eig_identity() {
        let e = sym_eig(&Matrix::identity(2), 1e-12).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0]);
        assert_eq!(e.vectors, Matrix::identity(2));
    }

    #[test]
    fn eig_diagonal_and_coupled() {
        let e = sym_eig(&Matrix::from_diag(&[4.0, 0.0]), 1e-12).unwrap();
        assert_eq!(e.values, vec![4.0, 0.0]);
        let a = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]);
        let e = sym_eig(&a, 1e-12).unwrap();
        assert_abs_diff_eq!(e.values[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.values[1], 1.0, epsilon = 1e-14);
        assert!(reconstruct_eig(&e).sub(&a).norm_max() < 1e-12 * a.norm_fro());
    }

    #[test]
    fn eig_rejects_bad_structure() {
        let rect = Matrix::zeros(2, 3);
        assert!(matches!(sym_eig(&rect, 1e-12), Err(LinalgError::NotSquare { .. })));
        let asym = Matrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]);
        assert!(matches!(sym_eig(&asym, 1e-12), Err(LinalgError::NotSymmetric { .. })));
    }

    #[test]
    fn sqrt_psd_examples() {
        assert_eq!(sqrt_psd(&Matrix::identity(3)).unwrap(), Matrix::identity(3));
        let s = sqrt_psd(&Matrix::from_diag(&[0.25, 0.0])).unwrap();
        assert_abs_diff_eq!(s[(0, 0)], 0.5, epsilon = 1e-15);
        assert_eq!(s[(1, 1)], 0.0);

        let a = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]);
        let s = sqrt_psd(&a).unwrap();
        // V diag(√3, 1) Vᵀ with V = [1 1; 1 -1]/√2.
        let r3 = 3f64.sqrt();
        let expected = Matrix::from_rows(&[[(r3 + 1.0) / 2.0, (r3 - 1.0) / 2.0], [(r3 - 1.0) / 2.0, (r3 + 1.0) / 2.0]]);
        assert!(s.sub(&expected).norm_max() < 1e-14);
        assert!(s.matmul(&s).sub(&a).norm_max() < 1e-10 * a.norm_fro());
    }

    #[test]
    fn sqrt_psd_clamps_drift_and_rejects_indefinite() {
        let drift = Matrix::from_diag(&[1.0, -1e-13]);
        let s = sqrt_psd(&drift).unwrap();
        assert_eq!(s[(1, 1)], 0.0);
        let neg = Matrix::from_diag(&[1.0, -1e-3]);
        assert!(matches!(sqrt_psd(&neg), Err(LinalgError::NotPsd { .. })));
    }

    #[test]
    fn svd_examples() {
        let z = svd(&Matrix::zeros(3, 2)).unwrap();
        assert!(z.values.iter().all(|&s| s == 0.0));
        let d = svd(&Matrix::from_rows(&[[13.0, 0.0], [0.0, 0.0]])).unwrap();
        assert_eq!(d.values, vec![13.0, 0.0]);
        let rot = Matrix::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]);
        let r = svd(&rot).unwrap();
        assert_abs_diff_eq!(r.values[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.values[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn svd_wide_matrix_reconstructs() {
        let a = Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let s = svd(&a).unwrap();
        let rec = s.u.matmul(&Matrix::from_diag(&s.values)).matmul(&s.vt);
        assert!(rec.sub(&a).norm_max() < 1e-12 * a.norm_fro());
    }

    #[test]
    fn solve_examples() {
        let b = vec![0.3, -1.2, 4.0];
        assert_eq!(solve(&Matrix::identity(3), &b).unwrap(), b);
        assert_eq!(solve(&Matrix::from_diag(&[2.0, 1.0]), &[4.0, 3.0]).unwrap(), vec![2.0, 3.0]);
        let x = solve(&Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]), &[3.0, 3.0]).unwrap();
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn solve_detects_singular() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]);
        assert!(matches!(solve(&a, &[1.0, 1.0]), Err(LinalgError::Singular { .. })));
        let a = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]]);
        assert!(matches!(solve(&a, &[1.0, 1.0, 0.0]), Err(LinalgError::Singular { .. })));
    }

    fn matrix_strategy(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
        prop::collection::vec(-5.0f64..5.0, rows * cols).prop_map(move |d| Matrix::from_row_major(rows, cols, d))
    }

    fn square_strategy() -> impl Strategy<Value = Matrix> {
        (2usize..=6).prop_flat_map(|n| matrix_strategy(n, n))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn eig_reconstructs_random_symmetric(g in square_strategy()) {
            let a = g.add(&g.transpose());
            let e = sym_eig(&a, 1e-12).unwrap();
            let scale = a.norm_fro().max(1e-300);
            prop_assert!(reconstruct_eig(&e).sub(&a).norm_fro() <= 1e-10 * scale);
            let vtv = e.vectors.transpose().matmul(&e.vectors);
            prop_assert!(vtv.sub(&Matrix::identity(a.rows())).norm_max() <= 1e-12);
            prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn sqrt_of_gram_matrix_squares_back(g in square_strategy()) {
            let a = g.transpose().matmul(&g);
            let s = sqrt_psd(&a).unwrap();
            prop_assert!(s.matmul(&s).sub(&a).norm_fro() <= 1e-9 * a.norm_fro().max(1e-300));
        }

        #[test]
        fn singular_values_match_gram_eigenvalues(
            (r, c) in (1usize..=6, 1usize..=6),
            seed in prop::collection::vec(-5.0f64..5.0, 36)
        ) {
            let a = Matrix::from_row_major(r, c, seed[..r * c].to_vec());
            let s = svd(&a).unwrap();
            let rec = s.u.matmul(&Matrix::from_diag(&s.values)).matmul(&s.vt);
            prop_assert!(rec.sub(&a).norm_fro() <= 1e-12 * a.norm_fro().max(1.0) * 10.0);
            let ata = a.transpose().matmul(&a);
            let e = sym_eig(&ata, 1e-9).unwrap();
            let top = e.values[0].max(0.0).sqrt().max(1e-300);
            for (k, sv) in s.values.iter().enumerate() {
                let from_eig = e.values[k].max(0.0).sqrt();
                prop_assert!((sv - from_eig).abs() <= 1e-9 * top.max(1.0),
                    "sigma {} vs sqrt(eig) {}", sv, from_eig);
            }
        }

        #[test]
        fn solve_residual_is_small(a in square_strategy(), b in prop::collection::vec(-5.0f64..5.0, 6)) {
            let b = &b[..a.rows()];
            if let Ok(x) = solve(&a, b) {
                let r = sub_vec(&a.matvec(&x), b);
                prop_assert!(norm2(&r) <= 1e-10 * (a.norm_fro() * norm2(&x) + norm2(b)));
            }
        }
    }
}
