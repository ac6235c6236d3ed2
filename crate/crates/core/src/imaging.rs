//! Monotonicity imaging of resistive inclusions.
//!
//! For an inclusion more resistive than the background, `T ⊆ A` implies
//! `H_T ⪯ H_A` at every valid λ. A test element whose transfer matrix is
//! not below the measurement therefore lies outside the anomaly, and the
//! union of the elements that pass is an upper bound of the support.
//! Symmetrically, every candidate `T ⊇ A` satisfies `H_A ⪯ H_T`, and the
//! intersection of the candidates that pass is a lower bound.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::assembly::ConductorModel;
use crate::error::{MitError, Result};
use crate::geometry::{make_inclusion_map, CellSet, ResistivityMap};
use crate::linalg::{sym_min_eigenvalue, sym_spectral_norm, symmetrize};
use crate::monotonicity::Tolerance;
use crate::spectral::{solve_modes, validity_domain};
use crate::transfer::{transfer_direct, SignConvention, TransferMatrix};

/// Number of default λ samples.
pub const DEFAULT_SAMPLE_COUNT: usize = 8;

/// Default λ samples: log-spaced over three decades starting at
/// `1.1·|pole|`.
pub fn default_lambda_samples(pole: f64) -> Vec<f64> {
    let start = 1.1 * pole.abs();
    (0..DEFAULT_SAMPLE_COUNT)
        .map(|k| start * 10f64.powf(3.0 * k as f64 / (DEFAULT_SAMPLE_COUNT - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImagingConfig {
    pub eta_bg: f64,
    pub eta_i: f64,
    pub lambda_samples: Vec<f64>,
    pub tol: Tolerance,
    /// Test elements for the upper bound.
    pub test_elements: Vec<CellSet>,
    /// Candidate supersets for the lower bound.
    pub candidates: Vec<CellSet>,
    pub sign: SignConvention,
}

impl ImagingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_bg.is_finite() && self.eta_bg > 0.0) {
            return Err(MitError::NonPositiveResistivity {
                value: self.eta_bg,
                context: "background".into(),
            });
        }
        if !(self.eta_i.is_finite() && self.eta_i > self.eta_bg) {
            return Err(MitError::InvalidInput(format!(
                "inclusion resistivity {} must exceed the background {}",
                self.eta_i, self.eta_bg
            )));
        }
        if self.lambda_samples.is_empty() {
            return Err(MitError::InvalidInput("no lambda samples".into()));
        }
        if self.lambda_samples.iter().any(|l| !l.is_finite()) {
            return Err(MitError::InvalidInput("lambda samples must be finite".into()));
        }
        Ok(())
    }
}

/// How the noise level is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseScale {
    /// `δ = level · ‖H_A(λ)‖₂` at each λ.
    #[default]
    Relative,
    /// `δ = level` at each λ.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub level: f64,
    pub scale: NoiseScale,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec {
            level: 0.0,
            scale: NoiseScale::Relative,
            seed: 0,
        }
    }
}

/// Measured transfer matrices of the anomaly scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub data: Vec<TransferMatrix>,
    /// Spectral-norm bound δ of the noise added at each λ.
    pub noise_bound: Vec<f64>,
    /// `‖H_A(λ)‖₂` before noise.
    pub norm: Vec<f64>,
}

impl Measurement {
    pub fn lambdas(&self) -> Vec<f64> {
        self.data.iter().map(|h| h.lambda).collect()
    }
}

/// Symmetric Gaussian matrix rescaled to spectral norm `delta`.
pub fn goe_perturbation(n: usize, delta: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut *rng));
    let s: DMatrix<f64> = symmetrize(&g);
    let norm = sym_spectral_norm(&s);
    if delta == 0.0 || norm == 0.0 {
        return DMatrix::zeros(n, n);
    }
    s * (delta / norm)
}

fn pole_of(model: &ConductorModel, eta: &ResistivityMap) -> Result<f64> {
    let r = model.resistance(eta)?;
    Ok(validity_domain(&solve_modes(&model.l, &r)?).lambda1)
}

/// Transfer matrices of `eta` at every λ, optionally perturbed.
pub fn measure_anomaly(
    model: &ConductorModel,
    eta: &ResistivityMap,
    lambdas: &[f64],
    noise: &NoiseSpec,
    sign: SignConvention,
) -> Result<Measurement> {
    if !(noise.level.is_finite() && noise.level >= 0.0) {
        return Err(MitError::InvalidInput(format!("noise level {} must be non-negative", noise.level)));
    }
    let pole = pole_of(model, eta)?;
    if let Some(&bad) = lambdas.iter().find(|&&l| !(l.is_finite() && l > pole)) {
        return Err(MitError::OutOfDomain { lambda: bad, pole });
    }
    let mats = model.matrices(eta)?;
    let clean = lambdas
        .par_iter()
        .map(|&l| transfer_direct(&mats, l, sign))
        .collect::<Result<Vec<_>>>()?;
    let norm: Vec<f64> = clean.iter().map(|h| sym_spectral_norm(&h.h)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut data = Vec::with_capacity(clean.len());
    let mut noise_bound = Vec::with_capacity(clean.len());
    for (mut h, &scale) in clean.into_iter().zip(&norm) {
        let delta = match noise.scale {
            NoiseScale::Relative => noise.level * scale,
            NoiseScale::Absolute => noise.level,
        };
        if delta > 0.0 {
            h.h += goe_perturbation(h.dim(), delta, &mut rng);
        }
        noise_bound.push(delta);
        data.push(h);
    }
    Ok(Measurement {
        data,
        noise_bound,
        norm,
    })
}

/// Which ordered difference an indicator measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    /// Margin of `H_A - H_T`; passing elements may lie inside the anomaly.
    Upper,
    /// Margin of `H_T - H_A`; passing candidates may contain the anomaly.
    Lower,
}

/// Which λ samples a test must pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    AtSample(usize),
    AllSamples,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorTable {
    pub bound: Bound,
    pub lambdas: Vec<f64>,
    pub elements: Vec<CellSet>,
    /// `raw[j][k]`: smallest eigenvalue of the ordered difference for
    /// element `j` at sample `k`.
    pub raw: Vec<Vec<f64>>,
    /// `raw` divided by `‖H_A(λ_k)‖₂`.
    pub normalized: Vec<Vec<f64>>,
    /// Pass threshold per sample; element passes when `raw ≥ -tol`.
    pub tol: Vec<f64>,
}

impl IndicatorTable {
    pub fn passes_at(&self, j: usize, k: usize) -> bool {
        self.raw[j][k] >= -self.tol[k]
    }

    pub fn passes(&self, j: usize, rule: Rule) -> bool {
        match rule {
            Rule::AtSample(k) => self.passes_at(j, k),
            Rule::AllSamples => (0..self.lambdas.len()).all(|k| self.passes_at(j, k)),
        }
    }

    pub fn passing(&self, rule: Rule) -> Vec<usize> {
        (0..self.elements.len()).filter(|&j| self.passes(j, rule)).collect()
    }
}

/// Union of the passing elements of an upper-bound table.
pub fn reconstruct_upper(table: &IndicatorTable, rule: Rule) -> CellSet {
    table
        .passing(rule)
        .into_iter()
        .fold(CellSet::empty(), |acc, j| acc.union(&table.elements[j]))
}

/// Intersection of the passing candidates of a lower-bound table; empty
/// when no candidate passes.
pub fn reconstruct_lower(table: &IndicatorTable, rule: Rule) -> CellSet {
    let mut passing = table.passing(rule).into_iter();
    match passing.next() {
        None => CellSet::empty(),
        Some(first) => passing.fold(table.elements[first].clone(), |acc, j| {
            acc.intersection(&table.elements[j])
        }),
    }
}

/// Poles of the sets used by the imaging threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    /// Pole of the background map, used as the threshold surrogate.
    pub surrogate: f64,
    /// Largest pole among the checked inclusion maps.
    pub max_pole: f64,
}

impl ThresholdReport {
    pub fn surrogate_is_conservative(&self) -> bool {
        self.max_pole <= self.surrogate
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    pub rule: Rule,
    pub upper: CellSet,
    pub lower: CellSet,
    pub upper_table: IndicatorTable,
    pub lower_table: IndicatorTable,
}

/// Shared background assembly plus the imaging configuration.
#[derive(Debug, Clone)]
pub struct Imager {
    pub model: ConductorModel,
    pub config: ImagingConfig,
    /// Pole of the background map.
    pub background_pole: f64,
}

impl Imager {
    pub fn new(model: ConductorModel, config: ImagingConfig) -> Result<Self> {
        config.validate()?;
        let bg = ResistivityMap::uniform(model.grid(), config.eta_bg)?;
        let background_pole = pole_of(&model, &bg)?;
        if let Some(&bad) = config.lambda_samples.iter().find(|&&l| l <= background_pole) {
            return Err(MitError::OutOfDomain {
                lambda: bad,
                pole: background_pole,
            });
        }
        Ok(Imager {
            model,
            config,
            background_pole,
        })
    }

    pub fn inclusion_map(&self, support: &CellSet) -> Result<ResistivityMap> {
        make_inclusion_map(self.model.grid(), self.config.eta_bg, support, self.config.eta_i)
    }

    /// Noise-free or noisy measurement of the inclusion `support`.
    pub fn measure(&self, support: &CellSet, noise: &NoiseSpec) -> Result<Measurement> {
        let eta = self.inclusion_map(support)?;
        measure_anomaly(&self.model, &eta, &self.config.lambda_samples, noise, self.config.sign)
    }

    /// Pass threshold at each sample: configured tolerance at the scale of
    /// the measurement plus the noise bound.
    pub fn thresholds(&self, measurement: &Measurement) -> Vec<f64> {
        measurement
            .norm
            .iter()
            .zip(&measurement.noise_bound)
            .map(|(&n, &d)| self.config.tol.at_scale(n) + d)
            .collect()
    }

    fn check_samples(&self, measurement: &Measurement) -> Result<()> {
        if measurement.lambdas() != self.config.lambda_samples {
            return Err(MitError::InvalidInput(
                "measurement samples differ from the configured lambda samples".into(),
            ));
        }
        Ok(())
    }

    /// Margins of one element at every sample.
    pub fn indicator(&self, measurement: &Measurement, element: &CellSet, bound: Bound) -> Result<Vec<f64>> {
        self.check_samples(measurement)?;
        let eta = self.inclusion_map(element)?;
        let mats = self.model.matrices(&eta)?;
        measurement
            .data
            .iter()
            .map(|ha| {
                let ht = transfer_direct(&mats, ha.lambda, self.config.sign)?;
                let diff = match bound {
                    Bound::Upper => &ha.h - &ht.h,
                    Bound::Lower => &ht.h - &ha.h,
                };
                Ok(sym_min_eigenvalue(&symmetrize(&diff)))
            })
            .collect()
    }

    pub fn indicator_table(
        &self,
        measurement: &Measurement,
        elements: &[CellSet],
        bound: Bound,
    ) -> Result<IndicatorTable> {
        self.check_samples(measurement)?;
        let raw = elements
            .par_iter()
            .map(|t| self.indicator(measurement, t, bound))
            .collect::<Result<Vec<_>>>()?;
        let normalized = raw
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&measurement.norm)
                    .map(|(&s, &n)| if n > 0.0 { s / n } else { s })
                    .collect()
            })
            .collect();
        Ok(IndicatorTable {
            bound,
            lambdas: measurement.lambdas(),
            elements: elements.to_vec(),
            raw,
            normalized,
            tol: self.thresholds(measurement),
        })
    }

    pub fn reconstruct(&self, measurement: &Measurement, rule: Rule) -> Result<ReconstructionResult> {
        if let Rule::AtSample(k) = rule {
            if k >= self.config.lambda_samples.len() {
                return Err(MitError::InvalidInput(format!("no lambda sample with index {k}")));
            }
        }
        let upper_table = self.indicator_table(measurement, &self.config.test_elements, Bound::Upper)?;
        let lower_table = self.indicator_table(measurement, &self.config.candidates, Bound::Lower)?;
        Ok(ReconstructionResult {
            rule,
            upper: reconstruct_upper(&upper_table, rule),
            lower: reconstruct_lower(&lower_table, rule),
            upper_table,
            lower_table,
        })
    }

    /// Compares the poles of the given inclusion supports with the
    /// background pole used as the threshold.
    pub fn threshold_report(&self, supports: &[CellSet]) -> Result<ThresholdReport> {
        let poles = supports
            .par_iter()
            .map(|s| pole_of(&self.model, &self.inclusion_map(s)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(ThresholdReport {
            surrogate: self.background_pole,
            max_pole: poles.into_iter().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}
