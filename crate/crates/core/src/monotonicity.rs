//! Loewner-order comparisons and the monotonicity checks.
//!
//! `A ⪯ B` means `B - A` is positive semi-definite. Comparisons are made
//! with a tolerance: `A ⪯ B` is accepted when the smallest eigenvalue of
//! `B - A` is at least `-tol`.

use nalgebra::{Cholesky, DMatrix, Dyn};
use rayon::prelude::*;

use crate::assembly::ConductorModel;
use crate::error::{MitError, Result};
use crate::geometry::{build_grid, CellSet, Coil, CoilSet, ResistivityMap, Scenario};
use crate::linalg::{relative_asymmetry, sym_min_eigenvalue, sym_spectral_norm, symmetrize};
use crate::spectral::{solve_modes, validity_domain};
use crate::transfer::{transfer_direct, SignConvention, MAX_ASYMMETRY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    /// `H1 ⪯ H2`.
    Leq,
    /// `H1 ⪰ H2`.
    Geq,
    Equal,
    Incomparable,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Leq => "LEQ",
            Relation::Geq => "GEQ",
            Relation::Equal => "EQUAL",
            Relation::Incomparable => "INCOMPARABLE",
        }
    }

    /// True when the relation does not contradict `H1 ⪯ H2`.
    pub fn allows_leq(self) -> bool {
        matches!(self, Relation::Leq | Relation::Equal)
    }
}

impl std::fmt::Display for Relation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoewnerVerdict {
    /// Smallest eigenvalue of `H2 - H1`.
    pub min_eig_diff: f64,
    /// Smallest eigenvalue of `H1 - H2`.
    pub min_eig_rev: f64,
    pub tol: f64,
    pub relation: Relation,
}

/// Absolute plus scale-relative tolerance: `abs + rel·scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    /// Tolerance for noise-free comparisons.
    pub const NOISELESS: Tolerance = Tolerance { abs: 0.0, rel: 1e-12 };

    pub fn new(abs: f64, rel: f64) -> Result<Self> {
        if !(abs.is_finite() && abs >= 0.0 && rel.is_finite() && rel >= 0.0) {
            return Err(MitError::InvalidInput(format!(
                "tolerance must be finite and non-negative (abs = {abs}, rel = {rel})"
            )));
        }
        Ok(Tolerance { abs, rel })
    }

    pub fn at_scale(&self, scale: f64) -> f64 {
        self.abs + self.rel * scale
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::NOISELESS
    }
}

fn check_symmetric(name: &str, a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(MitError::DimensionMismatch(format!(
            "{name} is {}x{}, not square",
            a.nrows(),
            a.ncols()
        )));
    }
    let asym = relative_asymmetry(a);
    if asym > MAX_ASYMMETRY {
        return Err(MitError::Asymmetric {
            asymmetry: asym,
            limit: MAX_ASYMMETRY,
        });
    }
    Ok(())
}

/// Compares two symmetric matrices in the Loewner order.
pub fn loewner_compare(h1: &DMatrix<f64>, h2: &DMatrix<f64>, tol: f64) -> Result<LoewnerVerdict> {
    check_symmetric("H1", h1)?;
    check_symmetric("H2", h2)?;
    if h1.shape() != h2.shape() {
        return Err(MitError::DimensionMismatch(format!(
            "cannot compare {}x{} with {}x{}",
            h1.nrows(),
            h1.ncols(),
            h2.nrows(),
            h2.ncols()
        )));
    }
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(MitError::InvalidInput(format!("tolerance {tol} must be non-negative")));
    }
    let diff = symmetrize(&(h2 - h1));
    let min_eig_diff = sym_min_eigenvalue(&diff);
    let min_eig_rev = sym_min_eigenvalue(&(-diff));
    let leq = min_eig_diff >= -tol;
    let geq = min_eig_rev >= -tol;
    let relation = match (leq, geq) {
        (true, true) => Relation::Equal,
        (true, false) => Relation::Leq,
        (false, true) => Relation::Geq,
        (false, false) => Relation::Incomparable,
    };
    Ok(LoewnerVerdict {
        min_eig_diff,
        min_eig_rev,
        tol,
        relation,
    })
}

/// One implication of the lemma suite: the hypothesis `A1 ⪯ A2` and the
/// transformed comparison, each as a smallest eigenvalue with its tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaCheck {
    pub hypothesis_margin: f64,
    pub hypothesis_tol: f64,
    pub conclusion_margin: f64,
    pub conclusion_tol: f64,
    /// Whether the conclusion must also imply the hypothesis.
    pub equivalence: bool,
}

impl LemmaCheck {
    pub fn hypothesis_holds(&self) -> bool {
        self.hypothesis_margin >= -self.hypothesis_tol
    }

    pub fn conclusion_holds(&self) -> bool {
        self.conclusion_margin >= -self.conclusion_tol
    }

    pub fn violated(&self) -> bool {
        let forward = self.hypothesis_holds() && !self.conclusion_holds();
        let backward = self.equivalence && self.conclusion_holds() && !self.hypothesis_holds();
        forward || backward
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaReport {
    /// `A1 ⪯ A2 ⟺ A2⁻¹ ⪯ A1⁻¹`.
    pub inverse: LemmaCheck,
    /// `A1 ⪯ A2 ⟺ A1 + C ⪯ A2 + C`.
    pub shift: LemmaCheck,
    /// `A1 ⪯ A2 ⟹ Bᵀ A1 B ⪯ Bᵀ A2 B`.
    pub congruence: LemmaCheck,
}

impl LemmaReport {
    pub fn violations(&self) -> usize {
        [self.inverse, self.shift, self.congruence]
            .iter()
            .filter(|c| c.violated())
            .count()
    }
}

/// Relative tolerance of the lemma suite.
pub const LEMMA_TOL: f64 = 1e-10;

fn spd_inverse(name: &str, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol: Cholesky<f64, Dyn> = Cholesky::new(a.clone())
        .ok_or_else(|| MitError::Singular(format!("{name} is not invertible as an SPD matrix")))?;
    Ok(symmetrize(&chol.inverse()))
}

/// Checks the three order-preservation rules on one instance.
pub fn check_lemma_suite(
    a1: &DMatrix<f64>,
    a2: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<LemmaReport> {
    check_symmetric("A1", a1)?;
    check_symmetric("A2", a2)?;
    check_symmetric("C", c)?;
    let n = a1.nrows();
    if a2.nrows() != n || c.nrows() != n || b.nrows() != n {
        return Err(MitError::DimensionMismatch("lemma operands are not conformable".into()));
    }
    let a1_inv = spd_inverse("A1", a1)?;
    let a2_inv = spd_inverse("A2", a2)?;

    let scale = sym_spectral_norm(a1).max(sym_spectral_norm(a2));
    let hypothesis_margin = sym_min_eigenvalue(&symmetrize(&(a2 - a1)));
    let hypothesis_tol = LEMMA_TOL * scale;

    let inv_scale = sym_spectral_norm(&a1_inv).max(sym_spectral_norm(&a2_inv));
    let inverse = LemmaCheck {
        hypothesis_margin,
        hypothesis_tol,
        conclusion_margin: sym_min_eigenvalue(&symmetrize(&(&a1_inv - &a2_inv))),
        conclusion_tol: LEMMA_TOL * inv_scale,
        equivalence: true,
    };

    let s1 = a1 + c;
    let s2 = a2 + c;
    let shift_scale = sym_spectral_norm(&s1).max(sym_spectral_norm(&s2)).max(scale);
    let shift = LemmaCheck {
        hypothesis_margin,
        hypothesis_tol,
        conclusion_margin: sym_min_eigenvalue(&symmetrize(&(s2 - s1))),
        conclusion_tol: LEMMA_TOL * shift_scale,
        equivalence: true,
    };

    let c1 = symmetrize(&(b.transpose() * a1 * b));
    let c2 = symmetrize(&(b.transpose() * a2 * b));
    let cong_scale = scale * b.norm().powi(2);
    let congruence = LemmaCheck {
        hypothesis_margin,
        hypothesis_tol,
        conclusion_margin: sym_min_eigenvalue(&symmetrize(&(c2 - c1))),
        conclusion_tol: LEMMA_TOL * cong_scale,
        equivalence: false,
    };

    Ok(LemmaReport {
        inverse,
        shift,
        congruence,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremSample {
    pub lambda: f64,
    pub verdict: LoewnerVerdict,
    /// `max(‖H_α‖₂, ‖H_β‖₂)`.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremReport {
    pub pole_alpha: f64,
    pub pole_beta: f64,
    pub samples: Vec<TheoremSample>,
}

impl TheoremReport {
    /// The relation shared by every sample, if there is one.
    pub fn consistent_relation(&self) -> Option<Relation> {
        let first = self.samples.first()?.verdict.relation;
        self.samples
            .iter()
            .all(|s| s.verdict.relation == first)
            .then_some(first)
    }

    /// Every sample is compatible with `H_α ⪯ H_β`.
    pub fn supports_leq(&self) -> bool {
        self.samples.iter().all(|s| s.verdict.relation.allows_leq())
    }
}

/// Compares `H_α(λ)` and `H_β(λ)` for `α ≤ β` on a shared conductor model.
pub fn verify_main_theorem_on(
    model: &ConductorModel,
    alpha: &ResistivityMap,
    beta: &ResistivityMap,
    lambdas: &[f64],
    tol: Tolerance,
    sign: SignConvention,
) -> Result<TheoremReport> {
    if alpha.len() != beta.len() {
        return Err(MitError::MapLengthMismatch {
            expected: alpha.len(),
            got: beta.len(),
        });
    }
    if !alpha.le(beta) {
        return Err(MitError::NotOrdered("alpha exceeds beta in some cell".into()));
    }
    let ma = model.matrices(alpha)?;
    let mb = model.matrices(beta)?;
    let pole_alpha = validity_domain(&solve_modes(&ma.l, &ma.r)?).lambda1;
    let pole_beta = validity_domain(&solve_modes(&mb.l, &mb.r)?).lambda1;
    let pole = pole_alpha.max(pole_beta);
    if let Some(&bad) = lambdas.iter().find(|&&l| !(l.is_finite() && l > pole)) {
        return Err(MitError::OutOfDomain { lambda: bad, pole });
    }
    let samples = lambdas
        .par_iter()
        .map(|&lambda| {
            let ha = transfer_direct(&ma, lambda, sign)?;
            let hb = transfer_direct(&mb, lambda, sign)?;
            let scale = sym_spectral_norm(&ha.h).max(sym_spectral_norm(&hb.h));
            let verdict = loewner_compare(&ha.h, &hb.h, tol.at_scale(scale))?;
            Ok(TheoremSample {
                lambda,
                verdict,
                scale,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TheoremReport {
        pole_alpha,
        pole_beta,
        samples,
    })
}

/// [`verify_main_theorem_on`] for two scenarios sharing grid and coils.
pub fn verify_main_theorem(
    alpha: &Scenario,
    beta: &Scenario,
    lambdas: &[f64],
    tol: Tolerance,
    wire_radius: Option<f64>,
    sign: SignConvention,
) -> Result<TheoremReport> {
    if alpha.grid != beta.grid || alpha.coils != beta.coils {
        return Err(MitError::InvalidInput(
            "scenarios must share the grid and the coil set".into(),
        ));
    }
    let model = ConductorModel::for_scenario(alpha, wire_radius)?;
    verify_main_theorem_on(&model, &alpha.eta, &beta.eta, lambdas, tol, sign)
}

/// Finds which sign makes `α ≤ β ⟹ H_α ⪯ H_β` on a canonical scenario: a
/// 4×4 copper-like plate under two coils, with one cell made ten times
/// more resistive. The relation is probed on both sides of `λ = 0`.
pub fn calibrate_sign_convention() -> Result<SignConvention> {
    let grid = build_grid(4, 4, 0.01, 0.001, [0.0, 0.0])?;
    let alpha = ResistivityMap::uniform(&grid, 1e-6)?;
    let beta = alpha.with_cells(&CellSet::new([grid.cell_index(1, 1)], grid.cell_count())?, 1e-5)?;
    let coils = CoilSet::new(vec![
        Coil::rectangle([0.015, 0.015], 0.02, 0.02, 0.003)?,
        Coil::rectangle([0.028, 0.022], 0.012, 0.016, 0.004)?,
    ]);
    let scenario = Scenario::new(grid, alpha.clone(), coils)?;
    let model = ConductorModel::for_scenario(&scenario, None)?;
    let ma = model.matrices(&alpha)?;
    let pole = validity_domain(&solve_modes(&ma.l, &ma.r)?).lambda1;
    let lambdas = [0.5 * pole, 1e4];
    let report = verify_main_theorem_on(
        &model,
        &alpha,
        &beta,
        &lambdas,
        Tolerance::NOISELESS,
        SignConvention::Positive,
    )?;
    match report.consistent_relation() {
        Some(Relation::Leq) => Ok(SignConvention::Positive),
        Some(Relation::Geq) => Ok(SignConvention::Negative),
        other => Err(MitError::InvalidInput(format!(
            "calibration scenario gave no strict ordering ({other:?})"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_resistance;
    use crate::transfer::SIGN_CONVENTION;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(v))
    }

    #[test]
    fn compare_examples() {
        let a = diag(&[1.0, 3.0]);
        assert_eq!(loewner_compare(&a, &a, 0.0).unwrap().relation, Relation::Equal);
        let v = loewner_compare(&diag(&[1.0, 1.0]), &diag(&[2.0, 2.0]), 0.0).unwrap();
        assert_eq!(v.relation, Relation::Leq);
        assert_eq!(v.min_eig_diff, 1.0);
        let v = loewner_compare(&diag(&[1.0, 2.0]), &diag(&[2.0, 1.0]), 0.0).unwrap();
        assert_eq!(v.relation, Relation::Incomparable);
        let v = loewner_compare(&diag(&[2.0, 2.0]), &diag(&[1.0, 1.0]), 0.0).unwrap();
        assert_eq!(v.relation, Relation::Geq);
    }

    #[test]
    fn compare_rejects_bad_input() {
        assert!(matches!(
            loewner_compare(&diag(&[1.0]), &diag(&[1.0, 2.0]), 0.0),
            Err(MitError::DimensionMismatch(_))
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            loewner_compare(&asym, &diag(&[1.0, 1.0]), 0.0),
            Err(MitError::Asymmetric { .. })
        ));
    }

    #[test]
    fn lemma_scalar_multiples() {
        let i = DMatrix::<f64>::identity(3, 3);
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 1.0, -1.0, 0.5]);
        let c = diag(&[0.3, -0.2, 5.0]);
        let rep = check_lemma_suite(&i, &(&i * 2.0), &b, &c).unwrap();
        assert_eq!(rep.violations(), 0);
        assert!((rep.inverse.conclusion_margin - 0.5).abs() < 1e-15);
        assert!(rep.congruence.conclusion_holds());
    }

    #[test]
    fn lemma_singular_congruence() {
        let a1 = diag(&[1.0, 2.0, 3.0]);
        let a2 = diag(&[1.5, 2.0, 4.0]);
        let b = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let rep = check_lemma_suite(&a1, &a2, &b, &DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(rep.violations(), 0);
        assert!(rep.congruence.conclusion_margin.abs() < 1e-15);
    }

    #[test]
    fn lemma_singular_input() {
        let a1 = diag(&[1.0, 0.0]);
        let a2 = diag(&[2.0, 1.0]);
        assert!(matches!(
            check_lemma_suite(&a1, &a2, &diag(&[1.0, 1.0]), &DMatrix::zeros(2, 2)),
            Err(MitError::Singular(_))
        ));
    }

    #[test]
    fn lemma_detects_unordered_pair_consistently() {
        let rep = check_lemma_suite(
            &diag(&[1.0, 2.0]),
            &diag(&[2.0, 1.0]),
            &diag(&[1.0, 1.0]),
            &DMatrix::zeros(2, 2),
        )
        .unwrap();
        assert!(!rep.inverse.hypothesis_holds());
        assert!(!rep.inverse.conclusion_holds());
        assert_eq!(rep.violations(), 0);
    }

    #[test]
    fn calibration_matches_global_convention() {
        assert_eq!(calibrate_sign_convention().unwrap(), SIGN_CONVENTION);
    }

    fn small_scenario(eta: ResistivityMap) -> Scenario {
        let grid = build_grid(4, 4, 0.01, 0.001, [0.0, 0.0]).unwrap();
        let coils = CoilSet::new(vec![
            Coil::rectangle([0.02, 0.02], 0.03, 0.03, 0.003).unwrap(),
            Coil::regular_polygon([0.01, 0.03], 0.006, 0.005, 10).unwrap(),
        ]);
        Scenario::new(grid, eta, coils).unwrap()
    }

    #[test]
    fn theorem_examples() {
        let grid = build_grid(4, 4, 0.01, 0.001, [0.0, 0.0]).unwrap();
        let alpha = ResistivityMap::uniform(&grid, 1e-6).unwrap();
        let beta = alpha
            .with_cells(&CellSet::new([6], 16).unwrap(), 1e-5)
            .unwrap();
        let sa = small_scenario(alpha.clone());
        let sb = small_scenario(beta.clone());

        let same = verify_main_theorem(&sa, &sa, &[1e3, 1e4], Tolerance::NOISELESS, None, SIGN_CONVENTION)
            .unwrap();
        assert!(same.samples.iter().all(|s| s.verdict.relation == Relation::Equal));

        let rep = verify_main_theorem(&sa, &sb, &[1e3, 1e4, 1e5], Tolerance::NOISELESS, None, SIGN_CONVENTION)
            .unwrap();
        assert_eq!(rep.consistent_relation(), Some(Relation::Leq));
        assert!(rep.samples.iter().all(|s| s.verdict.min_eig_diff > 0.0));
        // The more resistive map has the faster decay, hence the more negative pole.
        assert!(rep.pole_beta < rep.pole_alpha);

        let between = 0.5 * (rep.pole_alpha + rep.pole_beta);
        assert!(matches!(
            verify_main_theorem(&sa, &sb, &[between], Tolerance::NOISELESS, None, SIGN_CONVENTION),
            Err(MitError::OutOfDomain { .. })
        ));
        assert!(matches!(
            verify_main_theorem(&sb, &sa, &[1e3], Tolerance::NOISELESS, None, SIGN_CONVENTION),
            Err(MitError::NotOrdered(_))
        ));
    }

    #[test]
    fn randomized_lemma_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let n = rng.random_range(2..7);
            let g1 = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let g2 = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let a1 = &g1 * g1.transpose() + DMatrix::identity(n, n) * 0.1;
            let a2 = &a1 + &g2 * g2.transpose();
            let b = DMatrix::from_fn(n, rng.random_range(1..5), |_, _| rng.random_range(-2.0..2.0));
            let c = symmetrize(&DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)));
            assert_eq!(check_lemma_suite(&a1, &a2, &b, &c).unwrap().violations(), 0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// Entrywise-ordered maps give Loewner-ordered resistance matrices.
        #[test]
        fn resistance_is_loewner_monotone(
            base in proptest::collection::vec(1e-7f64..1e-5, 16),
            bump in proptest::collection::vec(0.0f64..2e-5, 16),
        ) {
            let grid = build_grid(4, 4, 0.01, 0.001, [0.0, 0.0]).unwrap();
            let (net, basis) = crate::assembly::assemble_loop_basis(&grid);
            let alpha = ResistivityMap::new(base.clone()).unwrap();
            let beta = ResistivityMap::new(base.iter().zip(&bump).map(|(a, b)| a + b).collect()).unwrap();
            let ra = assemble_resistance(&net, &basis, &alpha).unwrap();
            let rb = assemble_resistance(&net, &basis, &beta).unwrap();
            let v = loewner_compare(&ra, &rb, 1e-12 * rb.norm()).unwrap();
            prop_assert!(v.relation.allows_leq());
        }

        /// The relation found at one λ is found at every λ of the domain.
        #[test]
        fn direction_does_not_depend_on_lambda(
            cell in 0usize..16,
            factor in 1.5f64..20.0,
            u in 0.05f64..0.95,
        ) {
            let grid = build_grid(4, 4, 0.01, 0.001, [0.0, 0.0]).unwrap();
            let alpha = ResistivityMap::uniform(&grid, 1e-6).unwrap();
            let beta = alpha.with_cells(&CellSet::new([cell], 16).unwrap(), 1e-6 * factor).unwrap();
            let sa = small_scenario(alpha);
            let model = ConductorModel::for_scenario(&sa, None).unwrap();
            let ma = model.matrices(&sa.eta).unwrap();
            let pole = validity_domain(&solve_modes(&ma.l, &ma.r).unwrap()).lambda1;
            let lambdas = [u * pole, 1e2, 1e4, 1e6];
            let rep = verify_main_theorem_on(&model, &sa.eta, &beta, &lambdas, Tolerance::NOISELESS, SIGN_CONVENTION).unwrap();
            prop_assert_eq!(rep.consistent_relation(), Some(Relation::Leq));
        }
    }
}
