//! Complex-valued dense linear-algebra kernels shared by all estimators.
//!
//! Storage is column-major throughout so that `vec(X)` is a zero-copy view of
//! the entry buffer and `invec` is a reshape with the same convention. The
//! whitening/LS contracts are: `cholesky_lower` reconstructs its input to
//! 1e-10 relative Frobenius error, and `least_squares` residuals are
//! orthogonal to the column space within 1e-8 * ||A||_F * ||b||.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix with column-major entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be >= 1");
        Self {
            rows,
            cols,
            data: vec![Complex64::ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for c in 0..cols {
            for r in 0..rows {
                m[(r, c)] = f(r, c);
            }
        }
        m
    }

    /// Reshape a column-major entry buffer into a matrix (the inverse of `vec`).
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), rows * cols, "entry count must equal rows*cols");
        Self { rows, cols, data }
    }

    pub fn from_cols(cols: &[Vec<Complex64>]) -> Self {
        let rows = cols[0].len();
        let mut m = Self::zeros(rows, cols.len());
        for (j, col) in cols.iter().enumerate() {
            assert_eq!(col.len(), rows);
            m.col_mut(j).copy_from_slice(col);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Column-major entry buffer; this is exactly `vec(X)`.
    pub fn as_vec(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn col(&self, j: usize) -> &[Complex64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [Complex64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn hermitian(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn conj(&self) -> CMat {
        CMat::from_fn(self.rows, self.cols, |r, c| self[(r, c)].conj())
    }

    pub fn scale(&self, s: Complex64) -> CMat {
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn add(&self, other: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn mul(&self, other: &CMat) -> CMat {
        assert_eq!(
            self.cols, other.rows,
            "matmul dimension mismatch: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = CMat::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let bcol = other.col(j);
            let ocol = out.col_mut(j);
            for (k, &bkj) in bcol.iter().enumerate() {
                if bkj == Complex64::ZERO {
                    continue;
                }
                let acol = &self.data[k * self.rows..(k + 1) * self.rows];
                for (o, &aik) in ocol.iter_mut().zip(acol) {
                    *o += aik * bkj;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, v.len(), "matvec dimension mismatch");
        let mut out = vec![Complex64::ZERO; self.rows];
        for (k, &vk) in v.iter().enumerate() {
            if vk == Complex64::ZERO {
                continue;
            }
            let acol = self.col(k);
            for (o, &aik) in out.iter_mut().zip(acol) {
                *o += aik * vk;
            }
        }
        out
    }

    /// `A^H v` without forming the conjugate transpose.
    pub fn herm_mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.rows, v.len(), "matvec dimension mismatch");
        (0..self.cols).map(|j| cdot(self.col(j), v)).collect()
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Copy of the contiguous block with `rows x cols` entries starting at
    /// (`row0`, `col0`).
    pub fn block(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> CMat {
        assert!(row0 + rows <= self.rows && col0 + cols <= self.cols);
        CMat::from_fn(rows, cols, |r, c| self[(row0 + r, col0 + c)])
    }

    pub fn set_block(&mut self, row0: usize, col0: usize, block: &CMat) {
        assert!(row0 + block.rows <= self.rows && col0 + block.cols <= self.cols);
        for c in 0..block.cols {
            for r in 0..block.rows {
                self[(row0 + r, col0 + c)] = block[(r, c)];
            }
        }
    }

    /// Elementwise (Hadamard) product.
    pub fn hadamard(&self, other: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }

    /// Rank-one matrix `u v^H`.
    pub fn outer(u: &[Complex64], v: &[Complex64]) -> CMat {
        CMat::from_fn(u.len(), v.len(), |r, c| u[r] * v[c].conj())
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = Complex64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[c * self.rows + r]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[c * self.rows + r]
    }
}

/// Inner product `u^H v`.
pub fn cdot(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    debug_assert_eq!(u.len(), v.len());
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

pub fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vec_sub(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `v / ||v||`; errors on the zero vector.
pub fn normalize(v: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = vec_norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|z| z / n).collect())
}

/// Lower-triangular Cholesky factor of a Hermitian positive-definite matrix:
/// `L L^H = K` with a real positive diagonal.
///
/// If the first factorization hits a non-positive pivot, a diagonal jitter of
/// 1e-12 is added once before giving up with `NotPositiveDefinite`.
pub fn cholesky_lower(k: &CMat) -> Result<CMat> {
    if k.rows() != k.cols() {
        return Err(Error::DimensionMismatch(format!(
            "cholesky needs a square matrix, got {}x{}",
            k.rows(),
            k.cols()
        )));
    }
    match try_cholesky(k, 0.0) {
        Ok(l) => Ok(l),
        Err(_) => try_cholesky(k, 1e-12),
    }
}

fn try_cholesky(k: &CMat, jitter: f64) -> Result<CMat> {
    let n = k.rows();
    // Pivots must clear a floor relative to the matrix scale; a bare "> 0"
    // check would accept rank-deficient inputs whose pivots cancel down to
    // rounding noise (e.g. repeated beams in a combiner Gram matrix). The
    // jitter term keeps the retry pass from laundering a deficient pivot,
    // since K + jI can lift it by up to ~n*j.
    let scale = (0..n).map(|i| k[(i, i)].re).fold(0.0, f64::max);
    let floor = 1e-12 * scale + (n as f64 + 1.0) * jitter;
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut diag = k[(j, j)].re + jitter;
        for p in 0..j {
            diag -= l[(j, p)].norm_sqr();
        }
        if diag <= floor || !diag.is_finite() {
            return Err(Error::NotPositiveDefinite);
        }
        let dj = diag.sqrt();
        l[(j, j)] = Complex64::new(dj, 0.0);
        for i in j + 1..n {
            let mut s = k[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)].conj();
            }
            l[(i, j)] = s / dj;
        }
    }
    Ok(l)
}

/// Solve `L x = b` by forward substitution (L lower triangular).
pub fn solve_lower(l: &CMat, b: &[Complex64]) -> Vec<Complex64> {
    let n = l.rows();
    debug_assert_eq!(b.len(), n);
    let mut x = b.to_vec();
    for i in 0..n {
        for p in 0..i {
            let lip = l[(i, p)];
            x[i] = x[i] - lip * x[p];
        }
        x[i] /= l[(i, i)];
    }
    x
}

/// Solve `L^H x = b` by back substitution (L lower triangular).
pub fn solve_lower_herm(l: &CMat, b: &[Complex64]) -> Vec<Complex64> {
    let n = l.rows();
    debug_assert_eq!(b.len(), n);
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        for p in i + 1..n {
            let lpi = l[(p, i)].conj();
            x[i] = x[i] - lpi * x[p];
        }
        x[i] /= l[(i, i)];
    }
    x
}

/// Column-wise `L^{-1} B`.
pub fn solve_lower_mat(l: &CMat, b: &CMat) -> CMat {
    assert_eq!(l.rows(), b.rows(), "whitener/observation row mismatch");
    let mut out = CMat::zeros(b.rows(), b.cols());
    for j in 0..b.cols() {
        let x = solve_lower(l, b.col(j));
        out.col_mut(j).copy_from_slice(&x);
    }
    out
}

/// Minimum-norm solution of `min_x ||A x - b||_2` for a full-column-rank tall
/// matrix, via normal equations and the Cholesky kernel, with one step of
/// iterative refinement.
pub fn least_squares(a: &CMat, b: &[Complex64]) -> Result<Vec<Complex64>> {
    let rhs = CMat::from_col_major(b.len(), 1, b.to_vec());
    Ok(least_squares_mat(a, &rhs)?.into_vec())
}

/// Matrix right-hand-side variant of [`least_squares`]: columns of `B` are
/// solved against the same factorization.
pub fn least_squares_mat(a: &CMat, b: &CMat) -> Result<CMat> {
    if a.rows() != b.rows() {
        return Err(Error::DimensionMismatch(format!(
            "least squares: A is {}x{}, B has {} rows",
            a.rows(),
            a.cols(),
            b.rows()
        )));
    }
    if a.rows() < a.cols() {
        return Err(Error::RankDeficient);
    }
    let gram = a.hermitian().mul(a);
    let l = match cholesky_lower(&gram) {
        Ok(l) => l,
        Err(Error::NotPositiveDefinite) => return Err(Error::RankDeficient),
        Err(e) => return Err(e),
    };
    let mut x = CMat::zeros(a.cols(), b.cols());
    for j in 0..b.cols() {
        let rhs = a.herm_mul_vec(b.col(j));
        let mut xj = solve_lower_herm(&l, &solve_lower(&l, &rhs));
        // One refinement step keeps the residual orthogonal to range(A) even
        // when the Gram matrix squares a mediocre condition number.
        let ax = a.mul_vec(&xj);
        let resid = vec_sub(b.col(j), &ax);
        let corr_rhs = a.herm_mul_vec(&resid);
        let corr = solve_lower_herm(&l, &solve_lower(&l, &corr_rhs));
        for (xi, ci) in xj.iter_mut().zip(&corr) {
            *xi += ci;
        }
        x.col_mut(j).copy_from_slice(&xj);
    }
    Ok(x)
}

/// `vec(Wbar * X * F)`, i.e. `(F^T (x) Wbar) vec(X)` without materializing the
/// Kronecker product.
pub fn sandwich_apply(wbar: &CMat, x: &CMat, f: &CMat) -> Result<Vec<Complex64>> {
    if wbar.cols() != x.rows() || x.cols() != f.rows() {
        return Err(Error::DimensionMismatch(format!(
            "sandwich: {}x{} * {}x{} * {}x{}",
            wbar.rows(),
            wbar.cols(),
            x.rows(),
            x.cols(),
            f.rows(),
            f.cols()
        )));
    }
    Ok(wbar.mul(x).mul(f).into_vec())
}
