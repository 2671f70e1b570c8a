//! Symmetric-matrix helpers on top of `nalgebra`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative tolerance for treating a matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

pub fn check_square(m: &DMatrix<f64>, name: &'static str) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::InvalidInput(format!(
            "matrix `{name}` must be square and non-empty, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "matrix `{name}` has non-finite entries"
        )));
    }
    Ok(())
}

pub fn check_symmetric(m: &DMatrix<f64>, name: &'static str) -> Result<()> {
    check_square(m, name)?;
    let scale = m.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::NotSymmetric(name));
            }
        }
    }
    Ok(())
}

/// Eigenvalues of a symmetric matrix, largest first.
pub fn eigenvalues_desc(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    *eigenvalues_desc(m).last().expect("non-empty matrix")
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigenvalues_desc(m)[0]
}

/// Operator 2-norm of a symmetric matrix.
pub fn spectral_norm_symmetric(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Fails unless every eigenvalue is at least `-1e-10 * max(1, lambda_max)`.
pub fn check_psd(m: &DMatrix<f64>, name: &'static str) -> Result<()> {
    check_symmetric(m, name)?;
    let ev = eigenvalues_desc(m);
    let floor = -1e-10 * ev[0].abs().max(1.0);
    if ev.iter().any(|&l| l < floor) {
        return Err(Error::NotPositiveSemidefinite(name));
    }
    Ok(())
}

/// Symmetrize and clamp negative eigenvalues to zero.
pub fn project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose()
}

/// A factor `L` with `L L^T = m` for a PSD matrix (eigen square root, so
/// singular matrices are fine).
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

/// `lambda_max / lambda_min` of a symmetric matrix, infinite if singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let ev = eigenvalues_desc(m);
    let (hi, lo) = (ev[0], *ev.last().expect("non-empty"));
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}
