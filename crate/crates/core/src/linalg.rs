//! Dense linear algebra for the small symmetric systems that show up in
//! spline regression: Cholesky factorization, SPD solves, symmetric
//! eigendecomposition (cyclic Jacobi), Moore–Penrose inverse, pseudo
//! determinants and a one-sided Jacobi SVD for tall column matrices.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default relative tolerance for discarding eigenvalues.
pub const DEFAULT_REL_TOL: f64 = 1e-10;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row slices. Panics on ragged input.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), ncols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: nrows,
            cols: ncols,
            data,
        }
    }

    pub fn from_columns<C: AsRef<[T]>>(columns: &[C]) -> Self {
        let ncols = columns.len();
        let nrows = columns.first().map_or(0, |c| c.as_ref().len());
        let mut m = Self::zeros(nrows, ncols);
        for (j, c) in columns.iter().enumerate() {
            let c = c.as_ref();
            assert_eq!(c.len(), nrows, "ragged columns");
            for (i, &v) in c.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a == T::zero() {
                    continue;
                }
                let orow = other.row(l);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d = *d + a * b;
                }
            }
        }
        out
    }

    /// `self' * other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows, "t_matmul shape mismatch");
        let mut out = Self::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let arow = self.row(r);
            let brow = other.row(r);
            for (i, &a) in arow.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(brow) {
                    *d = *d + a * b;
                }
            }
        }
        out
    }

    /// Gram matrix `self' * self`.
    pub fn gram(&self) -> SymMatrix<T> {
        SymMatrix::from_matrix_unchecked(self.t_matmul(self).symmetrized())
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "mul_vec shape mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `self' * v`.
    pub fn t_mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.rows, v.len(), "t_mul_vec shape mismatch");
        let mut out = vec![T::zero(); self.cols];
        for (r, &w) in v.iter().enumerate() {
            if w == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(r)) {
                *o = *o + a * w;
            }
        }
        out
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-T::one()))
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &v| if v.abs() > acc { v.abs() } else { acc })
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    fn symmetrized(mut self) -> Self {
        assert_eq!(self.rows, self.cols);
        let two = T::lit(2.0);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = (self[(i, j)] + self[(j, i)]) / two;
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
        self
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Square matrix whose entries are exactly symmetric as stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T>(Matrix<T>);

impl<T: Real> SymMatrix<T> {
    /// Accepts a square matrix that is symmetric to `1e-10` relative to its
    /// largest entry and stores the exact average of the two triangles.
    pub fn from_matrix(m: Matrix<T>) -> Result<Self> {
        if m.rows != m.cols || m.rows == 0 {
            return Err(Error::domain(format!(
                "symmetric matrix must be square and nonempty, got {}x{}",
                m.rows, m.cols
            )));
        }
        let tol = T::lit(1e-10) * m.max_abs().max(T::one());
        for i in 0..m.rows {
            for j in (i + 1)..m.cols {
                if (m[(i, j)] - m[(j, i)]).abs() > tol {
                    return Err(Error::domain(format!("matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self(m.symmetrized()))
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        Self::from_matrix(Matrix::from_rows(rows))
    }

    pub(crate) fn from_matrix_unchecked(m: Matrix<T>) -> Self {
        Self(m)
    }

    pub fn identity(dim: usize) -> Self {
        Self(Matrix::identity(dim))
    }

    pub fn from_diag(diag: &[T]) -> Self {
        Self(Matrix::from_diag(diag))
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.0
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.dim()).map(|i| self.0[(i, i)]).collect()
    }

    pub fn trace(&self) -> T {
        self.diag().into_iter().sum()
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        self.0.mul_vec(v)
    }

    pub fn quad_form(&self, v: &[T]) -> T {
        dot(v, &self.mul_vec(v))
    }

    pub fn scale(&self, s: T) -> Self {
        Self(self.0.scale(s))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(self.0.add(&other.0))
    }

    /// `a * self + b * other`, the workhorse for assembling precisions.
    pub fn weighted_sum(&self, a: T, other: &Self, b: T) -> Self {
        assert_eq!(self.dim(), other.dim());
        let data = self
            .0
            .data
            .iter()
            .zip(&other.0.data)
            .map(|(&x, &y)| a * x + b * y)
            .collect();
        Self(Matrix {
            rows: self.0.rows,
            cols: self.0.cols,
            data,
        })
    }

    pub fn add_diag(&self, eps: T) -> Self {
        let mut m = self.0.clone();
        for i in 0..m.rows {
            m[(i, i)] = m[(i, i)] + eps;
        }
        Self(m)
    }

    /// Adds `B B'` for a column matrix `B`.
    pub fn add_outer(&self, b: &Matrix<T>) -> Self {
        let bbt = b.matmul(&b.transpose());
        Self(self.0.add(&bbt.symmetrized()))
    }
}

impl<T> Index<(usize, usize)> for SymMatrix<T> {
    type Output = T;
    fn index(&self, idx: (usize, usize)) -> &T {
        &self.0[idx]
    }
}

/// Lower-triangular Cholesky factor `L` with `L L' = A`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    lower: Matrix<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn lower(&self) -> &Matrix<T> {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.rows
    }

    /// Solves `L z = b`.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut z = b.to_vec();
        for i in 0..n {
            let row = self.lower.row(i);
            let s = dot(&row[..i], &z[..i]);
            z[i] = (z[i] - s) / row[i];
        }
        z
    }

    /// Solves `L' x = z`.
    pub fn solve_upper(&self, z: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut x = z.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s = s - self.lower[(j, i)] * x[j];
            }
            x[i] = s / self.lower[(i, i)];
        }
        x
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.solve_upper(&self.solve_lower(b))
    }

    pub fn log_det(&self) -> T {
        let two = T::lit(2.0);
        (0..self.dim()).map(|i| two * self.lower[(i, i)].ln()).sum()
    }
}

/// Cholesky factorization. Fails with `NotPositiveDefinite` when a pivot
/// drops below `eps * max_diag`.
pub fn cholesky<T: Real>(m: &SymMatrix<T>) -> Result<Cholesky<T>> {
    let n = m.dim();
    let max_diag = m.diag().into_iter().fold(T::zero(), T::max);
    let tol = T::epsilon() * max_diag.max(T::min_positive_value());
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for p in 0..j {
            d = d - l[(j, p)] * l[(j, p)];
        }
        if !(d > tol) {
            return Err(Error::NotPositiveDefinite {
                index: j,
                pivot: d.to_f64().unwrap_or(f64::NAN),
            });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for p in 0..j {
                s = s - l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(Cholesky { lower: l })
}

/// Cholesky with a single retry after adding `1e-8 * trace / dim` to the
/// diagonal.
pub fn cholesky_with_jitter<T: Real>(m: &SymMatrix<T>) -> Result<Cholesky<T>> {
    match cholesky(m) {
        Ok(c) => Ok(c),
        Err(first) => {
            let jitter = T::lit(1e-8) * m.trace().abs() / T::from_usize(m.dim()).unwrap();
            if jitter > T::zero() {
                cholesky(&m.add_diag(jitter)).map_err(|_| first)
            } else {
                Err(first)
            }
        }
    }
}

pub fn solve_spd<T: Real>(m: &SymMatrix<T>, rhs: &[T]) -> Result<Vec<T>> {
    if rhs.len() != m.dim() {
        return Err(Error::domain("right-hand side length does not match matrix"));
    }
    Ok(cholesky(m)?.solve(rhs))
}

/// Symmetric eigendecomposition with eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct EigenDecomposition<T> {
    pub eigenvalues: Vec<T>,
    /// Columns are the orthonormal eigenvectors.
    pub eigenvectors: Matrix<T>,
}

impl<T: Real> EigenDecomposition<T> {
    /// `V diag(w) V'`.
    pub fn reconstruct(&self) -> Matrix<T> {
        self.reconstruct_with(|w| w)
    }

    pub fn reconstruct_with(&self, f: impl Fn(T) -> T) -> Matrix<T> {
        let n = self.eigenvalues.len();
        let v = &self.eigenvectors;
        let fw: Vec<T> = self.eigenvalues.iter().map(|&w| f(w)).collect();
        Matrix::from_fn(n, n, |i, j| {
            (0..n).fold(T::zero(), |acc, p| acc + v[(i, p)] * fw[p] * v[(j, p)])
        })
    }

    /// Number of eigenvalues above `rel_tol * max|eigenvalue|`.
    pub fn rank(&self, rel_tol: T) -> usize {
        let cutoff = self.cutoff(rel_tol);
        self.eigenvalues.iter().filter(|&&w| w > cutoff).count()
    }

    fn cutoff(&self, rel_tol: T) -> T {
        let scale = self.eigenvalues.iter().fold(T::zero(), |acc, &w| acc.max(w.abs()));
        rel_tol * scale
    }

    /// Orthonormal basis of the eigenvectors whose eigenvalues are at or
    /// below the cutoff.
    pub fn kernel_basis(&self, rel_tol: T) -> Matrix<T> {
        let cutoff = self.cutoff(rel_tol);
        let idx: Vec<usize> = (0..self.eigenvalues.len())
            .filter(|&i| self.eigenvalues[i] <= cutoff)
            .collect();
        let n = self.eigenvectors.rows();
        Matrix::from_fn(n, idx.len(), |i, j| self.eigenvectors[(i, idx[j])])
    }
}

/// Cyclic Jacobi eigenvalue iteration.
pub fn symmetric_eigen<T: Real>(m: &SymMatrix<T>) -> EigenDecomposition<T> {
    let n = m.dim();
    let mut a = m.matrix().clone();
    let mut v = Matrix::identity(n);
    let two = T::lit(2.0);
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let mut off = T::zero();
        let mut diag_norm = T::zero();
        for i in 0..n {
            diag_norm = diag_norm + a[(i, i)] * a[(i, i)];
            for j in (i + 1)..n {
                off = off + a[(i, j)] * a[(i, j)];
            }
        }
        if off <= eps * eps * diag_norm || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();
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
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap());
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let eigenvectors = Matrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    EigenDecomposition {
        eigenvalues,
        eigenvectors,
    }
}

/// Moore–Penrose inverse of a positive semidefinite matrix together with
/// its numerical rank. Eigenvalues below `rel_tol * max` are treated as
/// zero; negative eigenvalues beyond that band are a domain error.
pub fn generalized_inverse<T: Real>(m: &SymMatrix<T>, rel_tol: T) -> Result<(SymMatrix<T>, usize)> {
    let eig = symmetric_eigen(m);
    let cutoff = eig.cutoff(rel_tol);
    if let Some(&w) = eig
        .eigenvalues
        .iter()
        .find(|&&w| w < -cutoff.max(T::min_positive_value()))
    {
        return Err(Error::domain(format!(
            "matrix is not positive semidefinite (eigenvalue {w})"
        )));
    }
    let rank = eig.rank(rel_tol);
    let inv = eig.reconstruct_with(|w| if w > cutoff { T::one() / w } else { T::zero() });
    Ok((SymMatrix::from_matrix_unchecked(inv.symmetrized()), rank))
}

/// Log of the product of eigenvalues above `rel_tol * max`.
pub fn log_pseudo_determinant<T: Real>(m: &SymMatrix<T>, rel_tol: T) -> (T, usize) {
    let eig = symmetric_eigen(m);
    let cutoff = eig.cutoff(rel_tol);
    let mut acc = T::zero();
    let mut rank = 0;
    for &w in &eig.eigenvalues {
        if w > cutoff {
            acc = acc + w.ln();
            rank += 1;
        }
    }
    (acc, rank)
}

/// Thin singular value decomposition `A = U diag(s) V'` of an `n x p`
/// matrix with `n >= p`, singular values sorted descending.
#[derive(Debug, Clone)]
pub struct ThinSvd<T> {
    pub u: Matrix<T>,
    pub singular_values: Vec<T>,
    pub v: Matrix<T>,
}

impl<T: Real> ThinSvd<T> {
    /// Count of singular values above `rel_tol * max`.
    pub fn rank(&self, rel_tol: T) -> usize {
        let smax = self.singular_values.first().copied().unwrap_or(T::zero());
        self.singular_values.iter().filter(|&&s| s > rel_tol * smax).count()
    }
}

/// One-sided (Hestenes) Jacobi SVD. Accurate small singular values, which
/// matters for rank decisions on nearly collinear columns.
pub fn thin_svd<T: Real>(a: &Matrix<T>) -> ThinSvd<T> {
    let (n, p) = (a.rows(), a.cols());
    assert!(n >= p, "thin_svd expects a tall matrix");
    let mut u = a.clone();
    let mut v = Matrix::identity(p);
    let eps = T::epsilon();
    let two = T::lit(2.0);
    for _sweep in 0..100 {
        let mut rotated = false;
        for i in 0..p {
            for j in (i + 1)..p {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for r in 0..n {
                    let ui = u[(r, i)];
                    let uj = u[(r, j)];
                    alpha = alpha + ui * ui;
                    beta = beta + uj * uj;
                    gamma = gamma + ui * uj;
                }
                if gamma.abs() <= eps * (alpha * beta).sqrt() || gamma == T::zero() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (two * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for r in 0..n {
                    let ui = u[(r, i)];
                    let uj = u[(r, j)];
                    u[(r, i)] = c * ui - s * uj;
                    u[(r, j)] = s * ui + c * uj;
                }
                for r in 0..p {
                    let vi = v[(r, i)];
                    let vj = v[(r, j)];
                    v[(r, i)] = c * vi - s * vj;
                    v[(r, j)] = s * vi + c * vj;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<T> = (0..p).map(|j| norm(&u.column(j))).collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());
    let singular_values: Vec<T> = order.iter().map(|&j| norms[j]).collect();
    let u_sorted = Matrix::from_fn(n, p, |r, c| {
        let s = norms[order[c]];
        if s > T::zero() {
            u[(r, order[c])] / s
        } else {
            T::zero()
        }
    });
    let v_sorted = Matrix::from_fn(p, p, |r, c| v[(r, order[c])]);
    ThinSvd {
        u: u_sorted,
        singular_values,
        v: v_sorted,
    }
}
