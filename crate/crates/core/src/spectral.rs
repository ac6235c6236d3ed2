//! Time constants and eddy-current modes.
//!
//! The modes solve the symmetric-definite pencil `L j = τ R j`. Both
//! matrices are SPD, so the pencil is reduced with the Cholesky factor
//! `R = G Gᵀ` to the standard problem `G⁻¹ L G⁻ᵀ y = τ y`, and `j = G⁻ᵀ y`.
//! Modes are R-orthonormal (`jₘᵀ R jₙ = δₘₙ`), which makes the modal
//! resistance 1 and the modal inductance equal to the time constant.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{MitError, Result};
use crate::linalg::{sym_min_eigenvalue, symmetrize};

#[derive(Debug, Clone, PartialEq)]
pub struct ModalBasis {
    /// Time constants τₙ (s), non-increasing.
    pub tau: Vec<f64>,
    /// Column `n` is the mode `jₙ`.
    pub modes: DMatrix<f64>,
    /// Modal resistances `jₙᵀ R jₙ` (Ω); 1 up to rounding.
    pub r: Vec<f64>,
    /// Modal inductances `jₙᵀ L jₙ` (H); τₙ up to rounding.
    pub l: Vec<f64>,
}

impl ModalBasis {
    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    /// Dominant (largest) time constant τ₁.
    pub fn tau1(&self) -> f64 {
        self.tau[0]
    }

    pub fn mode(&self, n: usize) -> DVector<f64> {
        self.modes.column(n).into_owned()
    }

    /// Modal coordinates `Jᵀ R x` of a loop-current vector.
    pub fn coordinates(&self, r: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
        self.modes.transpose() * (r * x)
    }
}

/// The half-line `λ > λ₁` on which `R + λL` is positive definite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidityDomain {
    /// Dominant pole `λ₁ = -1/τ₁` (1/s).
    pub lambda1: f64,
}

impl ValidityDomain {
    pub fn contains(&self, lambda: f64) -> bool {
        lambda.is_finite() && lambda > self.lambda1
    }

    pub fn check(&self, lambda: f64) -> Result<()> {
        if self.contains(lambda) {
            Ok(())
        } else {
            Err(MitError::OutOfDomain {
                lambda,
                pole: self.lambda1,
            })
        }
    }

    /// Intersection of two domains (the larger pole wins).
    pub fn joint(&self, other: &ValidityDomain) -> ValidityDomain {
        ValidityDomain {
            lambda1: self.lambda1.max(other.lambda1),
        }
    }
}

fn check_square(name: &str, a: &DMatrix<f64>, n: usize) -> Result<()> {
    if a.nrows() != n || a.ncols() != n {
        return Err(MitError::DimensionMismatch(format!(
            "{name} is {}x{}, expected {n}x{n}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

/// Full generalized eigendecomposition of `(L, R)`.
pub fn solve_modes(l: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<ModalBasis> {
    let n = r.nrows();
    check_square("R", r, n)?;
    check_square("L", l, n)?;
    if n == 0 {
        return Err(MitError::DimensionMismatch("empty pencil".into()));
    }
    let chol: Cholesky<f64, Dyn> = Cholesky::new(symmetrize(r))
        .ok_or_else(|| MitError::NotSpd("R: Cholesky factorization failed".into()))?;
    let g = chol.l();
    // C = G⁻¹ L G⁻ᵀ, formed as G⁻¹ (G⁻¹ L)ᵀ since L is symmetric.
    let x = g
        .solve_lower_triangular(l)
        .ok_or_else(|| MitError::Singular("Cholesky factor of R".into()))?;
    let c = g
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| MitError::Singular("Cholesky factor of R".into()))?;
    let eig = SymmetricEigen::new(symmetrize(&c));

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let tau: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    if tau[n - 1] <= 0.0 {
        return Err(MitError::NotSpd(format!(
            "L: smallest generalized eigenvalue {:e} is not positive",
            tau[n - 1]
        )));
    }

    let mut y = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        y.set_column(col, &eig.eigenvectors.column(k));
    }
    let mut modes = g
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or_else(|| MitError::Singular("Cholesky factor of R".into()))?;
    // Fix the sign: largest-magnitude entry of each mode is positive.
    for mut col in modes.column_iter_mut() {
        let pivot = col.iter().copied().fold(0.0_f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }

    let rj = r * &modes;
    let lj = l * &modes;
    let modal_r = (0..n).map(|k| modes.column(k).dot(&rj.column(k))).collect();
    let modal_l = (0..n).map(|k| modes.column(k).dot(&lj.column(k))).collect();
    Ok(ModalBasis {
        tau,
        modes,
        r: modal_r,
        l: modal_l,
    })
}

pub fn validity_domain(modal: &ModalBasis) -> ValidityDomain {
    ValidityDomain {
        lambda1: -1.0 / modal.tau1(),
    }
}

/// Smallest eigenvalue of `R + λL`; positive exactly on the validity domain.
pub fn check_coercive(l: &DMatrix<f64>, r: &DMatrix<f64>, lambda: f64) -> f64 {
    sym_min_eigenvalue(&symmetrize(&(r + l * lambda)))
}

/// `xᵀ L x / xᵀ R x`.
pub fn rayleigh_quotient(l: &DMatrix<f64>, r: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(l * x)) / x.dot(&(r * x))
}

/// Bisection for the sign change of [`check_coercive`] on `[lo, hi]`,
/// where `lo` must be non-coercive and `hi` coercive.
pub fn locate_coercivity_boundary(
    l: &DMatrix<f64>,
    r: &DMatrix<f64>,
    mut lo: f64,
    mut hi: f64,
    rel_tol: f64,
) -> Result<f64> {
    if check_coercive(l, r, lo) > 0.0 || check_coercive(l, r, hi) <= 0.0 {
        return Err(MitError::InvalidInput(
            "bisection bracket does not straddle the coercivity boundary".into(),
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if check_coercive(l, r, mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if (hi - lo).abs() <= rel_tol * hi.abs().max(lo.abs()) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
