//! Dense small-matrix kernels: symmetric PSD square roots by the Newton-type
//! fixed-point iteration, matrix cosine/sinc by power series, and the block
//! matrix exponential of the linearized Hamiltonian flow.
//!
//! Everything is stored dense row-major; all the experiments this crate
//! serves use d <= 10.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Index, IndexMut};

/// Hard cap on the cos/sinc power-series length.
const SERIES_MAX_TERMS: usize = 200;
/// Relative term-norm cutoff for series truncation.
const SERIES_REL_CUTOFF: f64 = 1e-15;
/// Term norms past this point signal a divergent series.
const SERIES_OVERFLOW: f64 = 1e150;
/// Iteration cap for the square-root fixed point.
const SQRT_MAX_ITERS: usize = 100_000;
/// Power-iteration step count for operator norms.
const OPNORM_ITERS: usize = 100;
const OPNORM_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinalgError {
    DimensionMismatch,
    NotSymmetric,
    NotPositiveDefinite,
    NoConvergence,
    SingularMatrix,
    DivergenceGuard,
    NonFinite,
}

impl fmt::Display for LinalgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            LinalgError::DimensionMismatch => "matrix dimensions do not agree",
            LinalgError::NotSymmetric => "matrix is not symmetric",
            LinalgError::NotPositiveDefinite => "matrix is not positive definite",
            LinalgError::NoConvergence => "iteration stalled before reaching tolerance",
            LinalgError::SingularMatrix => "matrix is singular to working tolerance",
            LinalgError::DivergenceGuard => "power series terms grew past the overflow threshold",
            LinalgError::NonFinite => "matrix has non-finite entries",
        };
        f.write_str(msg)
    }
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Mat { rows, cols, data }
    }

    pub fn diag(entries: &[f64]) -> Self {
        let mut m = Mat::zeros(entries.len(), entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Mat {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= s;
        }
        out
    }

    pub fn add(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (v, w) in out.data.iter_mut().zip(&other.data) {
            *v += w;
        }
        out
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (v, w) in out.data.iter_mut().zip(&other.data) {
            *v -= w;
        }
        out
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len());
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let mut acc = 0.0;
            for j in 0..self.cols {
                acc += self[(i, j)] * x[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn frob_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    /// Operator (spectral) norm via power iteration on `MᵀM`.
    pub fn op_norm(&self) -> f64 {
        assert!(self.is_square());
        let n = self.rows;
        if n == 0 {
            return 0.0;
        }
        if self.data.iter().all(|&v| v == 0.0) {
            return 0.0;
        }
        let mt = self.transpose();
        // Deterministic, non-degenerate start vector.
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.3 * (i as f64 + 1.0)).collect();
        normalize(&mut v);
        let mut lambda = 0.0_f64;
        for _ in 0..OPNORM_ITERS {
            let w = mt.matvec(&self.matvec(&v));
            let norm = libm::sqrt(w.iter().map(|x| x * x).sum());
            if norm == 0.0 {
                return 0.0;
            }
            let prev = lambda;
            lambda = norm;
            v = w;
            normalize(&mut v);
            if (lambda - prev).abs() <= OPNORM_REL_TOL * lambda {
                break;
            }
        }
        libm::sqrt(lambda)
    }

    /// Lower-triangular Cholesky factor; `None` when the matrix is not
    /// positive definite to working precision.
    pub fn cholesky(&self) -> Option<Mat> {
        assert!(self.is_square());
        let n = self.rows;
        let mut l = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut sum = self[(i, j)];
                for k in 0..j {
                    sum -= l[(i, k)] * l[(j, k)];
                }
                if i == j {
                    if !(sum > 0.0) || !sum.is_finite() {
                        return None;
                    }
                    l[(i, i)] = libm::sqrt(sum);
                } else {
                    l[(i, j)] = sum / l[(j, j)];
                }
            }
        }
        Some(l)
    }

    /// Solve `self * x = b` given that `self` is SPD, via Cholesky.
    pub fn solve_spd(&self, b: &[f64]) -> Option<Vec<f64>> {
        let l = self.cholesky()?;
        Some(l.solve_cholesky(b))
    }

    /// Solve `L Lᵀ x = b` where `self` is a lower-triangular factor.
    pub fn solve_cholesky(&self, b: &[f64]) -> Vec<f64> {
        let n = self.rows;
        assert_eq!(b.len(), n);
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut sum = b[i];
            for k in 0..i {
                sum -= self[(i, k)] * y[k];
            }
            y[i] = sum / self[(i, i)];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut sum = y[i];
            for k in (i + 1)..n {
                sum -= self[(k, i)] * x[k];
            }
            x[i] = sum / self[(i, i)];
        }
        x
    }

    /// Inverse of an SPD matrix via Cholesky.
    pub fn inverse_spd(&self) -> Option<Mat> {
        let n = self.rows;
        let l = self.cholesky()?;
        let mut inv = Mat::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = l.solve_cholesky(&e);
            e[j] = 0.0;
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        // Symmetrize away the round-off skew.
        Some(symmetrize(&inv))
    }

    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
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

fn normalize(v: &mut [f64]) {
    let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
    if norm > 0.0 {
        for x in v {
            *x /= norm;
        }
    }
}

pub fn symmetrize(m: &Mat) -> Mat {
    let mut out = m.clone();
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            out[(i, j)] = 0.5 * (m[(i, j)] + m[(j, i)]);
        }
    }
    out
}

/// A square matrix known to be symmetric to within `1e-12` relative.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    mat: Mat,
}

impl SymMatrix {
    pub fn new(mat: Mat) -> Result<Self, LinalgError> {
        if !mat.is_square() {
            return Err(LinalgError::DimensionMismatch);
        }
        if !mat.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        let scale = mat.frob_norm().max(1.0);
        for i in 0..mat.rows() {
            for j in 0..i {
                if (mat[(i, j)] - mat[(j, i)]).abs() > 1e-12 * scale {
                    return Err(LinalgError::NotSymmetric);
                }
            }
        }
        Ok(SymMatrix { mat: symmetrize(&mat) })
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix { mat: Mat::identity(n) }
    }

    pub fn diag(entries: &[f64]) -> Self {
        SymMatrix { mat: Mat::diag(entries) }
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.mat
    }

    pub fn into_mat(self) -> Mat {
        self.mat
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.mat[(i, i)]).sum()
    }

    /// Spectral condition number, computed by power iteration on the matrix
    /// and on its SPD inverse.
    pub fn cond_spd(&self) -> Result<f64, LinalgError> {
        let inv = self.mat.inverse_spd().ok_or(LinalgError::NotPositiveDefinite)?;
        let hi = self.mat.op_norm();
        let lo_inv = inv.op_norm();
        if hi == 0.0 || lo_inv == 0.0 {
            return Err(LinalgError::SingularMatrix);
        }
        Ok(hi * lo_inv)
    }
}

/// Curvature pair `A = √(V̄Ū)`, `B = √(ŪV̄)` of the linearized flow, with the
/// trajectory-length threshold `π/‖A‖` below which `‖cos(tA)‖ < 1`.
#[derive(Debug, Clone)]
pub struct CurvatureOperators {
    pub a: Mat,
    pub b: Mat,
    pub opnorm_a: f64,
    pub t_threshold: f64,
}

/// Symmetric PSD square root of an SPD matrix.
///
/// Normalizes so the operator norm is below one, then iterates
/// `R_{n+1} = (I - (V - R_n²))/2` from `R₀ = 0`; the limit satisfies
/// `(I - R)² = V`. Converges for any SPD input after the normalization.
pub fn sym_sqrt(m: &SymMatrix, tol: f64) -> Result<SymMatrix, LinalgError> {
    assert!(tol > 0.0);
    let n = m.dim();
    if m.as_mat().cholesky().is_none() {
        return Err(LinalgError::NotPositiveDefinite);
    }
    let scale = m.as_mat().op_norm() + 1.0;
    let v = m.as_mat().scale(1.0 / scale);
    let identity = Mat::identity(n);
    let m_norm = m.as_mat().frob_norm();

    let mut r = Mat::zeros(n, n);
    let mut converged = false;
    for _ in 0..SQRT_MAX_ITERS {
        // R' = (I - V + R²)/2
        let next = identity.sub(&v).add(&r.matmul(&r)).scale(0.5);
        let step = next.max_abs_diff(&r);
        r = next;
        if step <= 1e-16 {
            converged = true;
            break;
        }
        let root = identity.sub(&r);
        let residual = root.matmul(&root).scale(scale).sub(m.as_mat()).frob_norm();
        if residual <= tol * m_norm {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence);
    }
    let root = identity.sub(&r).scale(libm::sqrt(scale));
    Ok(SymMatrix { mat: symmetrize(&root) })
}

/// The (generally non-symmetric) square roots `A = √(V̄Ū)` and `B = √(ŪV̄)`,
/// built as `√U⁻¹·√(√U·V̄·√U)·√U` and its mirror image.
pub fn nonsym_sqrt_pair(vbar: &SymMatrix, ubar: &SymMatrix) -> Result<CurvatureOperators, LinalgError> {
    if vbar.dim() != ubar.dim() {
        return Err(LinalgError::DimensionMismatch);
    }
    let sqrt_u = sym_sqrt(ubar, 1e-13)?;
    let sqrt_u_inv = sqrt_u
        .as_mat()
        .inverse_spd()
        .ok_or(LinalgError::SingularMatrix)?;
    let inner = symmetrize(&sqrt_u.as_mat().matmul(vbar.as_mat()).matmul(sqrt_u.as_mat()));
    let inner_root = sym_sqrt(&SymMatrix { mat: inner }, 1e-13)?;
    let a = sqrt_u_inv.matmul(inner_root.as_mat()).matmul(sqrt_u.as_mat());
    let b = sqrt_u.as_mat().matmul(inner_root.as_mat()).matmul(&sqrt_u_inv);
    let opnorm_a = a.op_norm();
    Ok(CurvatureOperators {
        a,
        b,
        opnorm_a,
        t_threshold: core::f64::consts::PI / opnorm_a,
    })
}

fn matrix_series(m: &Mat, odd_denominator: bool) -> Result<Mat, LinalgError> {
    assert!(m.is_square());
    if !m.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let n = m.rows();
    let x = m.matmul(m);
    let mut term = Mat::identity(n);
    let mut acc = Mat::identity(n);
    for k in 1..SERIES_MAX_TERMS {
        let k = k as f64;
        // cos: divide by (2k-1)(2k); sinc: by (2k)(2k+1).
        let denom = if odd_denominator {
            (2.0 * k) * (2.0 * k + 1.0)
        } else {
            (2.0 * k - 1.0) * (2.0 * k)
        };
        term = term.matmul(&x).scale(-1.0 / denom);
        let term_norm = term.frob_norm();
        if term_norm > SERIES_OVERFLOW {
            return Err(LinalgError::DivergenceGuard);
        }
        acc = acc.add(&term);
        if term_norm <= SERIES_REL_CUTOFF * acc.frob_norm() {
            return Ok(acc);
        }
    }
    Err(LinalgError::NoConvergence)
}

/// Joint cosine and sinc with argument reduction: the power series is only
/// evaluated once the argument is scaled below unit norm, and the full-size
/// values are recovered through `cos(2X) = 2cos²(X) − I` and
/// `sinc(2X) = sinc(X)·cos(X)`. The raw series loses all accuracy through
/// cancellation once `‖M‖` reaches double digits.
fn cos_sinc(m: &Mat) -> Result<(Mat, Mat), LinalgError> {
    if !m.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let norm = m.frob_norm();
    let doublings = if norm > 1.0 { libm::ceil(libm::log2(norm)) as u32 } else { 0 };
    let scaled = m.scale(1.0 / libm::exp2(doublings as f64));
    let mut cos = matrix_series(&scaled, false)?;
    let mut sinc = matrix_series(&scaled, true)?;
    let identity = Mat::identity(m.rows());
    for _ in 0..doublings {
        sinc = sinc.matmul(&cos);
        cos = cos.matmul(&cos).scale(2.0).sub(&identity);
    }
    Ok((cos, sinc))
}

/// Matrix cosine.
pub fn mat_cos(m: &Mat) -> Result<Mat, LinalgError> {
    Ok(cos_sinc(m)?.0)
}

/// Matrix `sinc(M) = M⁻¹ sin(M)`; well defined (and equal to the identity)
/// at `M = 0`.
pub fn mat_sinc(m: &Mat) -> Result<Mat, LinalgError> {
    Ok(cos_sinc(m)?.1)
}

/// The `2d×2d` fundamental solution `exp([[0, tV̄], [-tŪ, 0]])` of the
/// linearized Hamiltonian flow, assembled from its closed-form blocks
/// `[[cos(tA), tV̄·sinc(tB)], [-tŪ·sinc(tA), cos(tB)]]`.
pub fn block_flow_matrix(t: f64, vbar: &SymMatrix, ubar: &SymMatrix) -> Result<Mat, LinalgError> {
    if vbar.dim() != ubar.dim() {
        return Err(LinalgError::DimensionMismatch);
    }
    let d = vbar.dim();
    if t == 0.0 {
        return Ok(Mat::identity(2 * d));
    }
    let pair = nonsym_sqrt_pair(vbar, ubar)?;
    let ta = pair.a.scale(t);
    let tb = pair.b.scale(t);
    let cos_a = mat_cos(&ta)?;
    let cos_b = mat_cos(&tb)?;
    let v_sinc_b = vbar.as_mat().matmul(&mat_sinc(&tb)?).scale(t);
    let u_sinc_a = ubar.as_mat().matmul(&mat_sinc(&ta)?).scale(-t);

    let mut out = Mat::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            out[(i, j)] = cos_a[(i, j)];
            out[(i, d + j)] = v_sinc_b[(i, j)];
            out[(d + i, j)] = u_sinc_a[(i, j)];
            out[(d + i, d + j)] = cos_b[(i, j)];
        }
    }
    Ok(out)
}

/// Determinant by LU with partial pivoting; used for volume-preservation
/// checks on flow Jacobians.
pub fn det(m: &Mat) -> f64 {
    assert!(m.is_square());
    let n = m.rows();
    let mut a = m.clone();
    let mut sign = 1.0_f64;
    for col in 0..n {
        let mut pivot = col;
        for row in (col + 1)..n {
            if a[(row, col)].abs() > a[(pivot, col)].abs() {
                pivot = row;
            }
        }
        if a[(pivot, col)] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for j in 0..n {
                let tmp = a[(col, j)];
                a[(col, j)] = a[(pivot, j)];
                a[(pivot, j)] = tmp;
            }
            sign = -sign;
        }
        let diag = a[(col, col)];
        for row in (col + 1)..n {
            let factor = a[(row, col)] / diag;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[(row, j)] -= factor * a[(col, j)];
            }
        }
    }
    let mut d = sign;
    for i in 0..n {
        d *= a[(i, i)];
    }
    d
}
