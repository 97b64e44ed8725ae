//! Independent numerical oracles for the test suites.
//!
//! Everything here is computed by a different route than the library under
//! test: eigendecompositions and SVD through nalgebra, matrix exponentials by
//! scaling and squaring, derivatives by finite differences, and optimal
//! transport by exhaustive permutation search.

use nalgebra::DVector;
pub use nalgebra::DMatrix;

/// Symmetric matrix square root via eigendecomposition.
/// Panics if the input is not positive semidefinite within `-1e-12`.
pub fn sym_sqrt_eig(m: &DMatrix<f64>) -> DMatrix<f64> {
    apply_sym(m, |l| {
        assert!(l > -1e-12, "matrix is not PSD: eigenvalue {l}");
        l.max(0.0).sqrt()
    })
}

/// Apply a scalar function to a symmetric matrix through its
/// eigendecomposition.
pub fn apply_sym(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        m.nrows(),
        eig.eigenvalues.iter().map(|&l| f(l)),
    ));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// cos(t·√(V̄Ū)) computed through the symmetric conjugation
/// √(V̄Ū) = √Ū⁻¹·√(√Ū V̄ √Ū)·√Ū.
pub fn cos_sqrt_product(vbar: &DMatrix<f64>, ubar: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    func_sqrt_product(vbar, ubar, |s| (t * s).cos())
}

/// sinc(t·√(V̄Ū)) by the same route; sinc(x) = sin(x)/x with sinc(0) = 1.
pub fn sinc_sqrt_product(vbar: &DMatrix<f64>, ubar: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    func_sqrt_product(vbar, ubar, |s| {
        let x = t * s;
        if x.abs() < 1e-150 {
            1.0
        } else {
            x.sin() / x
        }
    })
}

/// g(√(V̄Ū)) for analytic g, via the eigendecomposition of √Ū V̄ √Ū.
pub fn func_sqrt_product(
    vbar: &DMatrix<f64>,
    ubar: &DMatrix<f64>,
    g: impl Fn(f64) -> f64,
) -> DMatrix<f64> {
    let sqrt_u = sym_sqrt_eig(ubar);
    let sqrt_u_inv = sqrt_u.clone().try_inverse().expect("sqrt(U) is invertible");
    let core = &sqrt_u * vbar * &sqrt_u;
    let g_of_sqrt = apply_sym(&core, |l| g(l.max(0.0).sqrt()));
    &sqrt_u_inv * g_of_sqrt * &sqrt_u
}

/// Matrix exponential by scaling and squaring with a truncated Taylor
/// series; adequate as an oracle for well-scaled inputs.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = m.amax() * n as f64;
    let scale_pow = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = m / 2f64.powi(scale_pow);
    let mut result = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..60 {
        term = &term * &scaled / k as f64;
        result += &term;
        if term.amax() < 1e-18 {
            break;
        }
    }
    for _ in 0..scale_pow {
        result = &result * &result;
    }
    result
}

/// Fundamental matrix of q' = V̄p, p' = −Ūq over time t: the exponential of
/// the block generator. Independent route to the linearized flow.
pub fn block_flow_oracle(t: f64, vbar: &DMatrix<f64>, ubar: &DMatrix<f64>) -> DMatrix<f64> {
    let d = vbar.nrows();
    let mut gen = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            gen[(i, d + j)] = t * vbar[(i, j)];
            gen[(d + i, j)] = -t * ubar[(i, j)];
        }
    }
    expm(&gen)
}

/// Spectral (operator 2-) norm through SVD.
pub fn op_norm_svd(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

/// Central finite-difference gradient of a scalar function.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = step * (1.0 + x[i].abs());
        probe[i] = x[i] + h;
        let plus = f(&probe);
        probe[i] = x[i] - h;
        let minus = f(&probe);
        probe[i] = x[i];
        out.push((plus - minus) / (2.0 * h));
    }
    out
}

/// Central finite-difference Jacobian of a vector function.
pub fn fd_jacobian(
    f: impl Fn(&[f64]) -> Vec<f64>,
    x: &[f64],
    step: f64,
) -> Vec<Vec<f64>> {
    let m = f(x).len();
    let mut jac = vec![vec![0.0; x.len()]; m];
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        let h = step * (1.0 + x[j].abs());
        probe[j] = x[j] + h;
        let plus = f(&probe);
        probe[j] = x[j] - h;
        let minus = f(&probe);
        probe[j] = x[j];
        for i in 0..m {
            jac[i][j] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    jac
}

/// Exact W_p between equal-size clouds by exhaustive search over all
/// assignments. Factorial cost; intended for n ≤ 8.
pub fn exhaustive_wasserstein(a: &[f64], b: &[f64], d: usize, p: u8) -> f64 {
    let n = a.len() / d;
    assert_eq!(n, b.len() / d);
    assert!(n <= 8, "exhaustive oracle limited to n <= 8");
    let cost = |i: usize, j: usize| -> f64 {
        let mut acc = 0.0;
        for k in 0..d {
            let diff = a[i * d + k] - b[j * d + k];
            acc += diff * diff;
        }
        if p == 1 {
            acc.sqrt()
        } else {
            acc
        }
    };
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    heap_permutations(&mut perm, n, &mut |perm| {
        let total: f64 = (0..n).map(|i| cost(i, perm[i])).sum();
        if total < best {
            best = total;
        }
    });
    let mean = best / n as f64;
    if p == 1 {
        mean
    } else {
        mean.sqrt()
    }
}

fn heap_permutations(perm: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k <= 1 {
        visit(perm);
        return;
    }
    for i in 0..k {
        heap_permutations(perm, k - 1, visit);
        if k % 2 == 0 {
            perm.swap(i, k - 1);
        } else {
            perm.swap(0, k - 1);
        }
    }
}

/// Convert a row-major flat matrix into nalgebra form.
pub fn dmatrix_from_rows(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}
