//! Small dense symmetric helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn sym_min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).first().copied().unwrap_or(0.0)
}

/// Spectral norm of a symmetric matrix, `max |λ|`.
pub fn sym_spectral_norm(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `‖A - Aᵀ‖_F / ‖A‖_F` (0 for the zero matrix).
pub fn relative_asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.norm();
    if scale == 0.0 {
        0.0
    } else {
        (a - a.transpose()).norm() / scale
    }
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}
