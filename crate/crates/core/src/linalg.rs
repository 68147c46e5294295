//! Small symmetric-matrix helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Reciprocal condition numbers below this are treated as singular.
pub const MIN_RCOND: f64 = 1e-14;

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn eigenvalues(m: &Matrix) -> Vector {
    SymmetricEigen::new(symmetrize(m)).eigenvalues
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    eigenvalues(m).min()
}

pub fn max_eigenvalue(m: &Matrix) -> f64 {
    eigenvalues(m).max()
}

pub fn check_square(m: &Matrix, context: &str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::dims(context, m.nrows(), m.ncols()));
    }
    Ok(m.nrows())
}

/// Inverse of a symmetric positive-definite matrix, refusing ill-conditioned input.
pub fn spd_inverse(m: &Matrix) -> Result<Matrix> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    if lo <= 0.0 {
        return Err(Error::NotDefinite { what: "positive definite", min_eig: lo });
    }
    if lo / hi < MIN_RCOND {
        return Err(Error::IllConditioned { condition: hi / lo });
    }
    let inv_diag = Matrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
    Ok(symmetrize(&(&eig.eigenvectors * inv_diag * eig.eigenvectors.transpose())))
}

/// Symmetric square root `V diag(sqrt(l)) V^T` of a positive semidefinite matrix.
pub fn sqrt_psd(m: &Matrix) -> Result<Matrix> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let lo = eig.eigenvalues.min();
    let scale = eig.eigenvalues.amax().max(1.0);
    if lo < -1e-12 * scale {
        return Err(Error::NotDefinite { what: "positive semidefinite", min_eig: lo });
    }
    let root = Matrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * root * eig.eigenvectors.transpose())
}

/// `log det` of a symmetric positive-definite matrix via Cholesky; `None` when not PD.
pub fn log_det_spd(m: &Matrix) -> Option<f64> {
    let chol = nalgebra::Cholesky::new(symmetrize(m))?;
    Some(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

pub fn quad_form(m: &Matrix, x: &Vector) -> f64 {
    x.dot(&(m * x))
}
