//! Small dense linear-algebra helpers shared by the analysis modules.
//!
//! Matrices here are tiny (state dimension of a handful), so every solve is
//! done directly: Stein equations through their Kronecker-vectorized form,
//! symmetric functions through a full eigendecomposition.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    m.clone().complex_eigenvalues().iter().copied().collect()
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Applies `f` to the eigenvalues of the symmetric matrix `m`.
pub fn sym_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    symmetrize(&(&eig.eigenvectors * d * eig.eigenvectors.transpose()))
}

/// Symmetric PSD square root; slightly negative eigenvalues are treated as zero.
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_map(m, |x| x.max(0.0).sqrt())
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix with relative cutoff.
pub fn sym_pinv(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let scale = sym_eigenvalues(m).last().copied().unwrap_or(0.0).abs();
    let cut = rel_tol * scale;
    sym_map(m, |x| if x > cut { 1.0 / x } else { 0.0 })
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

/// `[A^0, A^1, ..., A^k]` by repeated multiplication.
pub fn powers(a: &DMatrix<f64>, k: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(k + 1);
    out.push(DMatrix::identity(a.nrows(), a.ncols()));
    for i in 0..k {
        let next = a * &out[i];
        out.push(next);
    }
    out
}

/// Single-entry matrix: zeros of shape `rows × cols` with a one at `(i, j)`.
pub fn single_entry(rows: usize, cols: usize, i: usize, j: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    m[(i, j)] = 1.0;
    m
}

fn check_square(what: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::dims(what, "square", format!("{}x{}", m.nrows(), m.ncols())));
    }
    Ok(())
}

/// Solves the Stein (discrete Lyapunov) equation `X = A X Aᵀ + Q` exactly via
/// `(I − A ⊗ A) vec X = vec Q`.
pub fn solve_stein(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square("Stein matrix A", a)?;
    let n = a.nrows();
    if q.shape() != (n, n) {
        return Err(Error::dims("Stein right-hand side", format!("{n}x{n}"), format!("{}x{}", q.nrows(), q.ncols())));
    }
    let rho = spectral_radius(a);
    if rho >= 1.0 {
        return Err(Error::Unstable { what: "Stein matrix A".into(), radius: rho });
    }
    solve_stein_unchecked(a, q)
}

/// Same as [`solve_stein`] without the stability precheck; the caller has
/// already established `ρ(A) < 1`.
pub(crate) fn solve_stein_unchecked(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let lhs = DMatrix::<f64>::identity(n * n, n * n) - a.kronecker(a);
    let rhs = nalgebra::DVector::from_column_slice(q.as_slice());
    let x = lhs.lu().solve(&rhs).ok_or_else(|| Error::Singular("Stein equation".into()))?;
    let x = DMatrix::from_column_slice(n, n, x.as_slice());
    let sym = (q - q.transpose()).norm() <= 1e-14 * q.norm().max(f64::MIN_POSITIVE);
    Ok(if sym { symmetrize(&x) } else { x })
}

/// Factored `I − A ⊗ A` for repeated Stein solves with the same `A`.
pub struct SteinSolver {
    n: usize,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl SteinSolver {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        check_square("Stein matrix A", a)?;
        let rho = spectral_radius(a);
        if rho >= 1.0 {
            return Err(Error::Unstable { what: "Stein matrix A".into(), radius: rho });
        }
        let n = a.nrows();
        Ok(Self { n, lu: (DMatrix::<f64>::identity(n * n, n * n) - a.kronecker(a)).lu() })
    }

    pub fn solve(&self, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.n;
        if q.shape() != (n, n) {
            return Err(Error::dims("Stein right-hand side", format!("{n}x{n}"), format!("{}x{}", q.nrows(), q.ncols())));
        }
        if n == 0 {
            return Ok(DMatrix::zeros(0, 0));
        }
        let rhs = nalgebra::DVector::from_column_slice(q.as_slice());
        let x = self.lu.solve(&rhs).ok_or_else(|| Error::Singular("Stein equation".into()))?;
        Ok(DMatrix::from_column_slice(n, n, x.as_slice()))
    }
}

/// Smith doubling iteration for `X = A X Aᵀ + Q`; converges quadratically when
/// `ρ(A) < 1`. Kept as an independent cross-check of the direct solve.
pub fn stein_doubling(a: &DMatrix<f64>, q: &DMatrix<f64>, iterations: usize) -> DMatrix<f64> {
    let mut x = q.clone();
    let mut ak = a.clone();
    for _ in 0..iterations {
        x = &x + &ak * &x * ak.transpose();
        ak = &ak * &ak;
    }
    x
}

/// `Σ_{q=0}^{k} A^q Q A^qᵀ`.
pub fn truncated_stein(a: &DMatrix<f64>, q: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut sum = DMatrix::zeros(q.nrows(), q.ncols());
    let mut aq = DMatrix::identity(a.nrows(), a.ncols());
    for _ in 0..=k {
        sum += &aq * q * aq.transpose();
        aq = a * &aq;
    }
    symmetrize(&sum)
}

/// Bound on the Frobenius norm of the tail `Σ_{q>k} A^q Q A^qᵀ = A^{k+1} X A^{k+1}ᵀ`
/// given the exact solution `X`: `‖A^{k+1}‖₂² ‖X‖_F`.
pub fn stein_tail_bound(a: &DMatrix<f64>, exact: &DMatrix<f64>, k: usize) -> f64 {
    let head = &powers(a, k + 1)[k + 1];
    let s = spectral_norm(head);
    s * s * exact.norm()
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().iter().copied().fold(0.0, f64::max)
}

/// Numerical rank of a complex matrix with tolerance `rel_tol · σ_max`.
pub fn complex_rank(m: &DMatrix<Complex64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    complex_rank(&m.map(|x| Complex64::new(x, 0.0)), rel_tol)
}

/// Orthonormal basis (columns) for the null space of `m`.
pub fn null_space(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // Pad to at least n rows so the SVD yields a full right basis.
    let mut padded = DMatrix::zeros(m.nrows().max(n), n);
    padded.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cols: Vec<_> = (0..n)
        .filter(|&i| svd.singular_values[i] <= rel_tol * smax.max(f64::MIN_POSITIVE))
        .map(|i| vt.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stein_scalar_matches_closed_form() {
        let a = DMatrix::from_element(1, 1, 0.6);
        let q = DMatrix::from_element(1, 1, 2.0);
        let x = solve_stein(&a, &q).unwrap();
        assert!((x[(0, 0)] - 2.0 / (1.0 - 0.36)).abs() < 1e-14);
    }

    #[test]
    fn stein_direct_agrees_with_doubling() {
        let a = DMatrix::from_row_slice(3, 3, &[0.5, 0.2, -0.1, 0.0, -0.4, 0.3, 0.1, 0.0, 0.7]);
        let q = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5]);
        let direct = solve_stein(&a, &q).unwrap();
        let iter = stein_doubling(&a, &q, 40);
        assert!((&direct - &iter).norm() <= 1e-12 * direct.norm());
        let resid = &direct - (&a * &direct * a.transpose() + &q);
        assert!(resid.norm() <= 1e-12 * direct.norm());
    }

    #[test]
    fn stein_rejects_unstable() {
        let a = DMatrix::identity(2, 2) * 1.5;
        let q = DMatrix::identity(2, 2);
        assert!(matches!(solve_stein(&a, &q), Err(Error::Unstable { .. })));
    }

    #[test]
    fn sqrt_reconstructs() {
        let s = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let r = sym_sqrt(&s);
        assert!((&r * &r - &s).norm() < 1e-13);
        assert!((&r - r.transpose()).norm() == 0.0);
    }

    #[test]
    fn null_space_of_rank_one() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let ns = null_space(&m, 1e-10);
        assert_eq!(ns.ncols(), 2);
        assert!((&m * &ns).norm() < 1e-12);
    }

    #[test]
    fn truncated_sum_converges_to_exact() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.3, 0.0, 0.4]);
        let q = DMatrix::identity(2, 2);
        let exact = solve_stein(&a, &q).unwrap();
        for k in [0, 3, 10, 30] {
            let trunc = truncated_stein(&a, &q, k);
            let tail = stein_tail_bound(&a, &exact, k);
            assert!((&exact - &trunc).norm() <= tail * (1.0 + 1e-9) + 1e-15, "k = {k}");
        }
    }
}
