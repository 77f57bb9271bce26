//! Dense factorizations shared by the simulators and solvers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest condition number accepted by the kriging solvers.
pub const CONDITION_CAP: f64 = 1e12;

/// Cholesky factor of a symmetric matrix, with additive diagonal jitter
/// escalating from 1e-12·trace/n to 1e-6·trace/n when the plain factorization fails.
pub fn jittered_cholesky(m: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok((c, 0.0));
    }
    let n = m.nrows().max(1);
    let scale = (m.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
    let mut rel = 1e-12;
    while rel <= 1e-6 * (1.0 + 1e-9) {
        let jitter = rel * scale;
        let mut mj = m.clone();
        for i in 0..m.nrows() {
            mj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(mj) {
            return Ok((c, jitter));
        }
        rel *= 10.0;
    }
    Err(Error::NotPsd)
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Spectral condition number of a symmetric matrix.
pub fn sym_condition(m: &DMatrix<f64>) -> f64 {
    let ev = sym_eigenvalues(m);
    let max = ev.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let min = ev.iter().fold(f64::INFINITY, |a, &v| a.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Condition number of a general square matrix from its singular values.
pub fn condition(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Factor B with B·Bᵀ = m for a symmetric positive semi-definite m.
/// Negative eigenvalues from rounding are clipped to zero.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let mut b = eig.eigenvectors.clone();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        for i in 0..b.nrows() {
            b[(i, j)] *= s;
        }
    }
    b
}

/// Numerical rank of a symmetric positive semi-definite Gram matrix:
/// eigenvalues above `tol` times the largest.
pub fn gram_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    let ev = sym_eigenvalues(m);
    let max = ev.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if max == 0.0 {
        return 0;
    }
    ev.iter().filter(|&&v| v > tol * max).count()
}

/// Symmetric solve guarded by the condition cap.
pub fn solve_symmetric(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let cond = sym_condition(m);
    if !(cond < CONDITION_CAP) {
        return Err(Error::SingularSystem { condition: cond });
    }
    let (chol, _) = jittered_cholesky(m)?;
    Ok(chol.solve(rhs))
}

/// General square solve guarded by the condition cap.
pub fn solve_general(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let cond = condition(m);
    if !(cond < CONDITION_CAP) {
        return Err(Error::SingularSystem { condition: cond });
    }
    m.clone()
        .lu()
        .solve(rhs)
        .ok_or(Error::SingularSystem { condition: cond })
}
