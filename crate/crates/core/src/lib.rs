//! Magnetic induction tomography on a thin conducting plate.
//!
//! The conductor is discretized into a resistive-inductive loop network
//! (stream-function basis on a rectangular cell grid), driven by filament
//! source coils. On top of the forward model the crate evaluates the
//! transfer operator `H(λ)` on the real axis, checks its Loewner
//! monotonicity with respect to the resistivity, and reconstructs the
//! support of resistivity anomalies with the monotonicity imaging rules.
//!
//! Module map:
//!
//! * [`geometry`]: grid, resistivity maps, coils, cell sets
//! * [`assembly`]: loop basis and the `L`, `R(η)`, `M` operator matrices
//! * [`spectral`]: time constants, modes and the validity domain
//! * [`transfer`]: `H(λ)` by direct solve and by modal expansion
//! * [`forward_time`]: exact modal time-domain solutions
//! * [`monotonicity`]: Loewner comparisons and the monotonicity checks
//! * [`imaging`]: test-element indicators and the upper/lower reconstructions
//! * [`cli_io`]: scenario files, result bundles and the command-line driver

pub mod assembly;
pub mod cli_io;
pub mod error;
pub mod forward_time;
pub mod geometry;
pub mod imaging;
pub(crate) mod linalg;
pub mod monotonicity;
pub mod quadrature;
pub mod spectral;
pub mod transfer;

pub use error::{MitError, Result};

/// Vacuum permeability (H/m).
pub const MU_0: f64 = 4.0e-7 * std::f64::consts::PI;

/// `μ0 / 4π` (H/m), the prefactor of the Neumann kernel.
pub const MU_0_OVER_4PI: f64 = 1.0e-7;
