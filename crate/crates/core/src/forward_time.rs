//! Exact time-domain solutions of `L dI/dt + R I = -M dI_s/dt`.
//!
//! Every trajectory is a finite sum of exponentials in the modal basis,
//! so currents and coil voltages are evaluated in closed form on the
//! requested time grid.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::assembly::OperatorMatrices;
use crate::error::{MitError, Result};
use crate::spectral::{validity_domain, ModalBasis};

/// Coil currents `p e^{λt}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentialSource {
    /// Growth rate λ (1/s).
    pub lambda: f64,
    /// Coil-current amplitudes (A), one per coil.
    pub pattern: DVector<f64>,
}

impl ExponentialSource {
    pub fn new(lambda: f64, pattern: DVector<f64>) -> Result<Self> {
        if !lambda.is_finite() {
            return Err(MitError::InvalidInput(format!("source rate {lambda} is not finite")));
        }
        if pattern.iter().any(|v| !v.is_finite()) || pattern.iter().all(|v| *v == 0.0) {
            return Err(MitError::InvalidInput(
                "source pattern must be finite and not all zero".into(),
            ));
        }
        Ok(ExponentialSource { lambda, pattern })
    }
}

/// Closed-form trajectory `I(t) = Σ cₙ e^{-t/τₙ} jₙ + e^{λt} Σ aₙ jₙ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalTrajectory {
    pub tau: Vec<f64>,
    pub modes: DMatrix<f64>,
    /// Transient coefficients cₙ (A).
    pub c: DVector<f64>,
    /// Forced modal amplitudes aₙ (A); zero for a source-free run.
    pub forced: DVector<f64>,
    /// Source rate; zero for a source-free run.
    pub lambda: f64,
    pub t_grid: Vec<f64>,
    /// Column `k` is `I(t_k)` (A).
    pub currents: DMatrix<f64>,
    /// Column `k` is `v(t_k)` (V).
    pub voltages: DMatrix<f64>,
}

impl ModalTrajectory {
    /// Modal derivatives `d/dt` of the coefficients at time `t`.
    fn modal_rate(&self, t: f64) -> DVector<f64> {
        let growth = (self.lambda * t).exp();
        DVector::from_fn(self.tau.len(), |n, _| {
            -self.c[n] / self.tau[n] * (-t / self.tau[n]).exp() + self.lambda * self.forced[n] * growth
        })
    }

    fn modal_state(&self, t: f64) -> DVector<f64> {
        let growth = (self.lambda * t).exp();
        DVector::from_fn(self.tau.len(), |n, _| {
            self.c[n] * (-t / self.tau[n]).exp() + self.forced[n] * growth
        })
    }

    /// Loop currents at an arbitrary time.
    pub fn current_at(&self, t: f64) -> DVector<f64> {
        &self.modes * self.modal_state(t)
    }

    /// Forced current pattern `j_F = Σ aₙ jₙ`, i.e. `I_F(0)`.
    pub fn forced_current(&self) -> DVector<f64> {
        &self.modes * &self.forced
    }

    /// `C e^{-t/τ₁}` with `C = Σ |cₙ| ‖jₙ‖`, an upper bound on the norm of
    /// the transient part.
    pub fn decay_bound(&self, t: f64) -> f64 {
        let c: f64 = (0..self.tau.len())
            .map(|n| self.c[n].abs() * self.modes.column(n).norm())
            .sum();
        c * (-t / self.tau[0]).exp()
    }
}

fn validate_initial(modal: &ModalBasis, i0: &DVector<f64>, t_grid: &[f64]) -> Result<()> {
    if i0.len() != modal.len() {
        return Err(MitError::DimensionMismatch(format!(
            "initial current has {} entries, expected {}",
            i0.len(),
            modal.len()
        )));
    }
    if t_grid.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(MitError::InvalidInput("time grid must be finite and non-negative".into()));
    }
    Ok(())
}

fn build(
    mats: &OperatorMatrices,
    modal: &ModalBasis,
    i0: &DVector<f64>,
    forced: DVector<f64>,
    lambda: f64,
    t_grid: &[f64],
) -> ModalTrajectory {
    let forced_current = &modal.modes * &forced;
    let c = modal.coordinates(&mats.r, &(i0 - forced_current));
    let mut traj = ModalTrajectory {
        tau: modal.tau.clone(),
        modes: modal.modes.clone(),
        c,
        forced,
        lambda,
        t_grid: t_grid.to_vec(),
        currents: DMatrix::zeros(0, 0),
        voltages: DMatrix::zeros(0, 0),
    };
    let columns: Vec<DVector<f64>> = t_grid.par_iter().map(|&t| traj.current_at(t)).collect();
    traj.currents = if columns.is_empty() {
        DMatrix::zeros(modal.len(), 0)
    } else {
        DMatrix::from_columns(&columns)
    };
    traj.voltages = measure_reaction(mats, &traj);
    traj
}

/// Response to an exponential source from the initial loop currents `i0`.
pub fn simulate_exponential(
    mats: &OperatorMatrices,
    modal: &ModalBasis,
    source: &ExponentialSource,
    i0: &DVector<f64>,
    t_grid: &[f64],
) -> Result<ModalTrajectory> {
    validate_initial(modal, i0, t_grid)?;
    validity_domain(modal).check(source.lambda)?;
    if source.pattern.len() != mats.m.ncols() {
        return Err(MitError::DimensionMismatch(format!(
            "source pattern has {} entries, expected {}",
            source.pattern.len(),
            mats.m.ncols()
        )));
    }
    let lambda = source.lambda;
    // Projection of the modes on the source: (Mᵀ jₙ)·p.
    let drive = modal.modes.transpose() * (&mats.m * &source.pattern);
    let forced = DVector::from_fn(modal.len(), |n, _| {
        -lambda * drive[n] / (1.0 + lambda * modal.tau[n])
    });
    Ok(build(mats, modal, i0, forced, lambda, t_grid))
}

/// Source-free decay from `i0`.
pub fn simulate_free(
    mats: &OperatorMatrices,
    modal: &ModalBasis,
    i0: &DVector<f64>,
    t_grid: &[f64],
) -> Result<ModalTrajectory> {
    validate_initial(modal, i0, t_grid)?;
    Ok(build(mats, modal, i0, DVector::zeros(modal.len()), 0.0, t_grid))
}

/// Coil voltages `v(t) = -Mᵀ dI/dt` on the trajectory's time grid, with the
/// derivative taken mode by mode.
pub fn measure_reaction(mats: &OperatorMatrices, traj: &ModalTrajectory) -> DMatrix<f64> {
    let projection = -(mats.m.transpose() * &traj.modes);
    let columns: Vec<DVector<f64>> = traj
        .t_grid
        .par_iter()
        .map(|&t| &projection * traj.modal_rate(t))
        .collect();
    if columns.is_empty() {
        DMatrix::zeros(mats.m.ncols(), 0)
    } else {
        DMatrix::from_columns(&columns)
    }
}
