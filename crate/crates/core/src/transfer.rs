//! The transfer operator `H(λ)` on the real axis.
//!
//! For an exponential source `p e^{λt}` the forced loop currents solve
//! `(R + λL) j = -λ M p`, and the reaction voltage picked up by the coils
//! is `-λ Mᵀ j e^{λt}`, i.e. `λ² Mᵀ (R + λL)⁻¹ M p e^{λt}`. The stored
//! matrix is that expression multiplied by the sign convention, so that
//! the reported Loewner relation reads `α ≤ β ⟹ H_α ⪯ H_β`; see
//! `calibrate_sign_convention` in the monotonicity module.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::assembly::OperatorMatrices;
use crate::error::{MitError, Result};
use crate::linalg::{relative_asymmetry, symmetrize};
use crate::spectral::{solve_modes, validity_domain, ModalBasis, ValidityDomain};

/// Relative asymmetry tolerated before explicit symmetrisation.
pub const MAX_ASYMMETRY: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignConvention {
    Positive,
    Negative,
}

/// Convention used across the crate; fixed by the calibration experiment.
pub const SIGN_CONVENTION: SignConvention = SignConvention::Negative;

impl SignConvention {
    pub fn value(self) -> f64 {
        match self {
            SignConvention::Positive => 1.0,
            SignConvention::Negative => -1.0,
        }
    }

    pub fn from_value(v: i64) -> Option<Self> {
        match v {
            1 => Some(SignConvention::Positive),
            -1 => Some(SignConvention::Negative),
            _ => None,
        }
    }
}

impl Default for SignConvention {
    fn default() -> Self {
        SIGN_CONVENTION
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    /// Real evaluation point (1/s).
    pub lambda: f64,
    /// `n_s × n_s` symmetric matrix, convention applied.
    pub h: DMatrix<f64>,
    pub sign: SignConvention,
    /// Relative asymmetry before symmetrisation.
    pub asymmetry: f64,
}

impl TransferMatrix {
    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    /// `λ² Mᵀ (R + λL)⁻¹ M`, the coil voltage per unit exponential source
    /// amplitude, independent of the sign convention.
    pub fn physical(&self) -> DMatrix<f64> {
        &self.h * self.sign.value()
    }
}

fn finalize(lambda: f64, raw: DMatrix<f64>, sign: SignConvention) -> Result<TransferMatrix> {
    let asymmetry = relative_asymmetry(&raw);
    if asymmetry > MAX_ASYMMETRY {
        return Err(MitError::Asymmetric {
            asymmetry,
            limit: MAX_ASYMMETRY,
        });
    }
    Ok(TransferMatrix {
        lambda,
        h: symmetrize(&raw),
        sign,
        asymmetry,
    })
}

/// `H(λ)` by factoring `R + λL` and solving against the columns of `M`.
///
/// For `λ < 0` a failed Cholesky factorization means `λ` is at or below
/// the pole and is reported as out of domain.
pub fn transfer_direct(
    mats: &OperatorMatrices,
    lambda: f64,
    sign: SignConvention,
) -> Result<TransferMatrix> {
    if !lambda.is_finite() {
        return Err(MitError::InvalidInput(format!("lambda = {lambda} is not finite")));
    }
    let a = symmetrize(&(&mats.r + &mats.l * lambda));
    let chol: Cholesky<f64, Dyn> = match Cholesky::new(a) {
        Some(c) => c,
        None if lambda < 0.0 => {
            let pole = solve_modes(&mats.l, &mats.r)
                .map(|m| validity_domain(&m).lambda1)
                .unwrap_or(f64::NAN);
            return Err(MitError::OutOfDomain { lambda, pole });
        }
        None => return Err(MitError::Singular(format!("R + λL at λ = {lambda}"))),
    };
    let x = chol.solve(&mats.m);
    let raw = mats.m.transpose() * x * (sign.value() * lambda * lambda);
    finalize(lambda, raw, sign)
}

/// [`transfer_direct`] with an explicit validity check against `domain`.
pub fn transfer_direct_in(
    mats: &OperatorMatrices,
    domain: &ValidityDomain,
    lambda: f64,
    sign: SignConvention,
) -> Result<TransferMatrix> {
    domain.check(lambda)?;
    transfer_direct(mats, lambda, sign)
}

/// `H(λ)` from the modal resolvent `λ² Σₙ (Mᵀjₙ)(Mᵀjₙ)ᵀ / (1 + λτₙ)`.
pub fn transfer_modal(
    modal: &ModalBasis,
    m: &DMatrix<f64>,
    lambda: f64,
    sign: SignConvention,
) -> Result<TransferMatrix> {
    validity_domain(modal).check(lambda)?;
    if m.nrows() != modal.modes.nrows() {
        return Err(MitError::DimensionMismatch(format!(
            "M has {} rows, modal basis has {} loops",
            m.nrows(),
            modal.modes.nrows()
        )));
    }
    let p = m.transpose() * &modal.modes;
    let mut scaled = p.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col /= 1.0 + lambda * modal.tau[k];
    }
    let raw = &scaled * p.transpose() * (sign.value() * lambda * lambda);
    finalize(lambda, raw, sign)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eigenvalues;

    fn scalar(l: f64, r: f64, m: f64) -> OperatorMatrices {
        OperatorMatrices {
            l: DMatrix::from_element(1, 1, l),
            r: DMatrix::from_element(1, 1, r),
            m: DMatrix::from_element(1, 1, m),
        }
    }

    #[test]
    fn scalar_half_pole() {
        let (l, r, m) = (1e-8, 4e-3, 3e-9);
        let mats = scalar(l, r, m);
        let tau = l / r;
        let lambda = -1.0 / (2.0 * tau);
        let h = transfer_direct(&mats, lambda, SignConvention::Positive).unwrap();
        let want = m * m / (2.0 * tau * tau) / r;
        assert!(((h.h[(0, 0)] - want) / want).abs() < 1e-14);
        let modal = solve_modes(&mats.l, &mats.r).unwrap();
        let hm = transfer_modal(&modal, &mats.m, lambda, SignConvention::Positive).unwrap();
        assert!(((hm.h[(0, 0)] - want) / want).abs() < 1e-14);
        let neg = transfer_direct(&mats, lambda, SignConvention::Negative).unwrap();
        assert_eq!(neg.h[(0, 0)], -h.h[(0, 0)]);
        assert_eq!(neg.physical(), h.h);
    }

    #[test]
    fn zero_lambda_gives_zero() {
        let mats = scalar(1e-8, 4e-3, 3e-9);
        let h = transfer_direct(&mats, 0.0, SIGN_CONVENTION).unwrap();
        assert_eq!(h.h[(0, 0)], 0.0);
    }

    #[test]
    fn below_pole_is_out_of_domain() {
        let mats = scalar(1e-8, 4e-3, 3e-9);
        let tau = 2.5e-6;
        assert!(matches!(
            transfer_direct(&mats, -2.0 / tau, SIGN_CONVENTION),
            Err(MitError::OutOfDomain { .. })
        ));
        let modal = solve_modes(&mats.l, &mats.r).unwrap();
        assert!(matches!(
            transfer_modal(&modal, &mats.m, -2.0 / tau, SIGN_CONVENTION),
            Err(MitError::OutOfDomain { .. })
        ));
        let dom = validity_domain(&modal);
        assert!(matches!(
            transfer_direct_in(&mats, &dom, dom.lambda1, SIGN_CONVENTION),
            Err(MitError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn physical_form_is_psd() {
        let mats = OperatorMatrices {
            l: DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            r: DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 3.0]),
            m: DMatrix::from_row_slice(2, 3, &[1.0, 0.3, -0.2, 0.1, 0.7, 0.4]),
        };
        for lambda in [-0.2, 0.5, 10.0] {
            let h = transfer_direct(&mats, lambda, SIGN_CONVENTION).unwrap();
            assert!(sym_eigenvalues(&h.physical())[0] >= -1e-14);
            assert_eq!(h.h, h.h.transpose());
        }
    }
}
