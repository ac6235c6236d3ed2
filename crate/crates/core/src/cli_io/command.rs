//! The `mitmono` command-line driver.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;

use super::output::{fmt_f64, matrix_rows, sha256_hex, to_json, Bundle, Provenance, Table};
use super::scenario::{parse_scenario, ParseError, ScenarioConfig};
use crate::assembly::{ConductorModel, OperatorMatrices};
use crate::error::MitError;
use crate::forward_time::{simulate_exponential, ExponentialSource};
use crate::geometry::{CellSet, ResistivityMap};
use crate::imaging::{default_lambda_samples, measure_anomaly, Imager, ImagingConfig, IndicatorTable, Rule};
use crate::monotonicity::verify_main_theorem_on;
use crate::spectral::{solve_modes, validity_domain, ModalBasis};
use crate::transfer::{transfer_direct, transfer_modal};

#[derive(Debug, Parser)]
#[command(name = "mitmono", version, about = "Monotonicity-based magnetic induction tomography on a thin plate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file (TOML).
    scenario: PathBuf,
    /// Output directory; created if missing.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Time constants and modal constants.
    Spectrum(Common),
    /// Transfer matrices H(λ).
    Transfer {
        #[command(flatten)]
        common: Common,
        /// Evaluation points; defaults to the scenario samples.
        #[arg(long = "lambda", value_delimiter = ',', allow_negative_numbers = true)]
        lambda: Vec<f64>,
    },
    /// Coil voltages for an exponential source, starting from rest.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Source rate; defaults to the first scenario sample.
        #[arg(long, allow_negative_numbers = true)]
        lambda: Option<f64>,
        /// Coil-current amplitudes; defaults to 1 A in every coil.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        pattern: Vec<f64>,
        /// End time in units of the dominant time constant.
        #[arg(long, default_value_t = 20.0)]
        t_end: f64,
        /// Number of time samples.
        #[arg(long, default_value_t = 201)]
        steps: usize,
    },
    /// Loewner comparison of the background and the scenario map.
    VerifyMono {
        #[command(flatten)]
        common: Common,
        #[arg(long = "lambda", value_delimiter = ',', allow_negative_numbers = true)]
        lambda: Vec<f64>,
    },
    /// Upper and lower bounds of the inclusion support.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Overrides `run.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Spectrum(c) => c,
            Command::Transfer { common, .. }
            | Command::Simulate { common, .. }
            | Command::VerifyMono { common, .. }
            | Command::Reconstruct { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Spectrum(_) => "spectrum",
            Command::Transfer { .. } => "transfer",
            Command::Simulate { .. } => "simulate",
            Command::VerifyMono { .. } => "verify-mono",
            Command::Reconstruct { .. } => "reconstruct",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Parse(ParseError),
    Model(MitError),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Parse(_) => 2,
            CliError::Model(e) if e.is_numeric() => 4,
            CliError::Model(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Parse(e) => write!(f, "scenario: {e}"),
            CliError::Model(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o: {e}"),
        }
    }
}

impl From<MitError> for CliError {
    fn from(e: MitError) -> Self {
        CliError::Model(e)
    }
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: &Command) -> Result<(), CliError> {
    let common = command.common();
    let bytes = std::fs::read(&common.scenario)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", common.scenario.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Usage(format!("{} is not UTF-8", common.scenario.display())))?;
    let cfg = parse_scenario(&text).map_err(CliError::Parse)?;
    let mut ctx = Context::new(command.name(), &bytes, cfg)?;
    let bundle = match command {
        Command::Spectrum(_) => ctx.spectrum(),
        Command::Transfer { lambda, .. } => ctx.transfer(lambda),
        Command::Simulate {
            lambda,
            pattern,
            t_end,
            steps,
            ..
        } => ctx.simulate(*lambda, pattern, *t_end, *steps),
        Command::VerifyMono { lambda, .. } => ctx.verify_mono(lambda),
        Command::Reconstruct { seed, .. } => {
            if let Some(s) = seed {
                ctx.provenance.seed = *s;
                ctx.cfg.run.seed = *s;
                ctx.cfg.run.noise.seed = *s;
            }
            ctx.reconstruct()
        }
    }?;
    write_bundle(&bundle, &common.out)
}

fn write_bundle(bundle: &Bundle, dir: &Path) -> Result<(), CliError> {
    bundle.write_to(dir).map_err(CliError::Io)
}

struct Context {
    cfg: ScenarioConfig,
    model: ConductorModel,
    mats: OperatorMatrices,
    modal: ModalBasis,
    background_pole: f64,
    provenance: Provenance,
}

impl Context {
    fn new(command: &str, bytes: &[u8], cfg: ScenarioConfig) -> Result<Self, CliError> {
        let model = ConductorModel::for_scenario(&cfg.scenario, Some(cfg.wire_radius))?;
        let mats = model.matrices(&cfg.scenario.eta)?;
        let modal = solve_modes(&mats.l, &mats.r)?;
        let bg = ResistivityMap::uniform(&cfg.scenario.grid, cfg.background())?;
        let r_bg = model.resistance(&bg)?;
        let background_pole = validity_domain(&solve_modes(&model.l, &r_bg)?).lambda1;
        let provenance = Provenance {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_sha256: sha256_hex(bytes),
            seed: cfg.run.seed,
            sign_convention: cfg.run.sign.value() as i64,
        };
        Ok(Context {
            cfg,
            model,
            mats,
            modal,
            background_pole,
            provenance,
        })
    }

    fn samples(&self, requested: &[f64]) -> Vec<f64> {
        if !requested.is_empty() {
            requested.to_vec()
        } else if let Some(s) = &self.cfg.run.lambda_samples {
            s.clone()
        } else {
            default_lambda_samples(self.background_pole)
        }
    }

    fn pole(&self) -> f64 {
        validity_domain(&self.modal).lambda1
    }

    fn spectrum(&self) -> Result<Bundle, CliError> {
        #[derive(Serialize)]
        struct Out<'a> {
            provenance: &'a Provenance,
            loop_count: usize,
            coil_count: usize,
            wire_radius: f64,
            pole: f64,
            tau: &'a [f64],
            modal_resistance: &'a [f64],
            modal_inductance: &'a [f64],
        }
        let mut table = Table::new(["mode", "tau", "modal_resistance", "modal_inductance"]);
        for n in 0..self.modal.len() {
            table.push(vec![
                n.to_string(),
                fmt_f64(self.modal.tau[n]),
                fmt_f64(self.modal.r[n]),
                fmt_f64(self.modal.l[n]),
            ]);
        }
        let mut bundle = Bundle::default();
        bundle.add("spectrum.csv", table.to_bytes());
        bundle.add(
            "spectrum.json",
            to_json(&Out {
                provenance: &self.provenance,
                loop_count: self.mats.loop_count(),
                coil_count: self.mats.coil_count(),
                wire_radius: self.cfg.wire_radius,
                pole: self.pole(),
                tau: &self.modal.tau,
                modal_resistance: &self.modal.r,
                modal_inductance: &self.modal.l,
            }),
        );
        Ok(bundle)
    }

    fn transfer(&self, requested: &[f64]) -> Result<Bundle, CliError> {
        #[derive(Serialize)]
        struct Entry {
            lambda: f64,
            asymmetry: f64,
            modal_relative_difference: f64,
            h: Vec<Vec<f64>>,
        }
        #[derive(Serialize)]
        struct Out<'a> {
            provenance: &'a Provenance,
            pole: f64,
            matrices: Vec<Entry>,
        }
        let sign = self.cfg.run.sign;
        let domain = validity_domain(&self.modal);
        let mut entries = Vec::new();
        let mut table = Table::new(["lambda", "row", "col", "value"]);
        for lambda in self.samples(requested) {
            domain.check(lambda)?;
            let direct = transfer_direct(&self.mats, lambda, sign)?;
            let modal = transfer_modal(&self.modal, &self.mats.m, lambda, sign)?;
            let scale = direct.h.norm();
            let diff = if scale > 0.0 {
                (&modal.h - &direct.h).norm() / scale
            } else {
                modal.h.norm()
            };
            for r in 0..direct.dim() {
                for c in 0..direct.dim() {
                    table.push(vec![fmt_f64(lambda), r.to_string(), c.to_string(), fmt_f64(direct.h[(r, c)])]);
                }
            }
            entries.push(Entry {
                lambda,
                asymmetry: direct.asymmetry,
                modal_relative_difference: diff,
                h: matrix_rows(&direct.h),
            });
        }
        let mut bundle = Bundle::default();
        bundle.add("transfer.csv", table.to_bytes());
        bundle.add(
            "transfer.json",
            to_json(&Out {
                provenance: &self.provenance,
                pole: self.pole(),
                matrices: entries,
            }),
        );
        Ok(bundle)
    }

    fn simulate(&self, lambda: Option<f64>, pattern: &[f64], t_end: f64, steps: usize) -> Result<Bundle, CliError> {
        #[derive(Serialize)]
        struct Out<'a> {
            provenance: &'a Provenance,
            lambda: f64,
            tau1: f64,
            pattern: Vec<f64>,
            t: &'a [f64],
            voltages: Vec<Vec<f64>>,
            transfer_times_pattern: Vec<f64>,
            final_relative_difference: f64,
        }
        if !(t_end.is_finite() && t_end > 0.0) || steps < 2 {
            return Err(CliError::Usage("--t-end must be positive and --steps at least 2".into()));
        }
        let lambda = lambda.unwrap_or_else(|| self.samples(&[])[0]);
        let ns = self.mats.coil_count();
        let pattern = if pattern.is_empty() {
            DVector::from_element(ns, 1.0)
        } else if pattern.len() == ns {
            DVector::from_column_slice(pattern)
        } else {
            return Err(CliError::Usage(format!("--pattern needs {ns} values, got {}", pattern.len())));
        };
        let source = ExponentialSource::new(lambda, pattern.clone())?;
        let tau1 = self.modal.tau1();
        let t: Vec<f64> = (0..steps)
            .map(|k| t_end * tau1 * k as f64 / (steps - 1) as f64)
            .collect();
        let traj = simulate_exponential(&self.mats, &self.modal, &source, &DVector::zeros(self.modal.len()), &t)?;
        let reference = transfer_direct(&self.mats, lambda, self.cfg.run.sign)?.physical() * &pattern;
        let t_last = *t.last().expect("at least two samples");
        let last = traj.voltages.column(steps - 1) * (-lambda * t_last).exp();
        let final_relative_difference = if reference.norm() > 0.0 {
            (&last - &reference).norm() / reference.norm()
        } else {
            last.norm()
        };

        let mut header = vec!["t".to_string()];
        header.extend((0..ns).map(|k| format!("v_{k}")));
        let mut table = Table::new(header);
        for (k, &tk) in t.iter().enumerate() {
            let mut row = vec![fmt_f64(tk)];
            row.extend(traj.voltages.column(k).iter().map(|&v| fmt_f64(v)));
            table.push(row);
        }
        let mut bundle = Bundle::default();
        bundle.add("simulate.csv", table.to_bytes());
        bundle.add(
            "simulate.json",
            to_json(&Out {
                provenance: &self.provenance,
                lambda,
                tau1,
                pattern: pattern.iter().copied().collect(),
                t: &t,
                voltages: matrix_rows(&traj.voltages.transpose()),
                transfer_times_pattern: reference.iter().copied().collect(),
                final_relative_difference,
            }),
        );
        Ok(bundle)
    }

    fn verify_mono(&self, requested: &[f64]) -> Result<Bundle, CliError> {
        #[derive(Serialize)]
        struct Sample {
            lambda: f64,
            relation: &'static str,
            min_eig_diff: f64,
            min_eig_rev: f64,
            tol: f64,
        }
        #[derive(Serialize)]
        struct Out<'a> {
            provenance: &'a Provenance,
            alpha: &'static str,
            beta: &'static str,
            pole_alpha: f64,
            pole_beta: f64,
            consistent_relation: Option<&'static str>,
            samples: Vec<Sample>,
        }
        let bg = ResistivityMap::uniform(&self.cfg.scenario.grid, self.cfg.background())?;
        let eta = &self.cfg.scenario.eta;
        let (alpha, beta, names) = if bg.le(eta) {
            (&bg, eta, ("background", "scenario"))
        } else if eta.le(&bg) {
            (eta, &bg, ("scenario", "background"))
        } else {
            return Err(MitError::NotOrdered(
                "scenario map is neither above nor below the background".into(),
            )
            .into());
        };
        let lambdas = self.samples(requested);
        let report = verify_main_theorem_on(&self.model, alpha, beta, &lambdas, self.cfg.run.tol, self.cfg.run.sign)?;
        let mut table = Table::new(["lambda", "relation", "min_eig_diff", "min_eig_rev", "tol"]);
        let mut samples = Vec::new();
        for s in &report.samples {
            let v = &s.verdict;
            table.push(vec![
                fmt_f64(s.lambda),
                v.relation.as_str().to_string(),
                fmt_f64(v.min_eig_diff),
                fmt_f64(v.min_eig_rev),
                fmt_f64(v.tol),
            ]);
            samples.push(Sample {
                lambda: s.lambda,
                relation: v.relation.as_str(),
                min_eig_diff: v.min_eig_diff,
                min_eig_rev: v.min_eig_rev,
                tol: v.tol,
            });
        }
        let mut bundle = Bundle::default();
        bundle.add("verify_mono.csv", table.to_bytes());
        bundle.add(
            "verify_mono.json",
            to_json(&Out {
                provenance: &self.provenance,
                alpha: names.0,
                beta: names.1,
                pole_alpha: report.pole_alpha,
                pole_beta: report.pole_beta,
                consistent_relation: report.consistent_relation().map(|r| r.as_str()),
                samples,
            }),
        );
        Ok(bundle)
    }

    fn reconstruct(&self) -> Result<Bundle, CliError> {
        #[derive(Serialize)]
        struct Threshold {
            surrogate: f64,
            max_pole: f64,
            conservative: bool,
        }
        #[derive(Serialize)]
        struct Out<'a> {
            provenance: &'a Provenance,
            eta_background: f64,
            eta_inclusion: f64,
            lambda_samples: &'a [f64],
            rule: String,
            noise_bound: &'a [f64],
            measurement_norm: &'a [f64],
            upper_tol: &'a [f64],
            lower_tol: &'a [f64],
            truth: &'a [usize],
            upper: &'a [usize],
            lower: &'a [usize],
            truth_in_upper: bool,
            lower_in_truth: bool,
            threshold: Threshold,
            test_elements: Vec<&'a [usize]>,
            candidates: Vec<&'a [usize]>,
        }
        let plan = &self.cfg.imaging;
        let eta_i = plan.eta_i.ok_or_else(|| {
            CliError::Usage(
                "imaging.inclusion_value is required when the scenario has no single inclusion value above the background"
                    .into(),
            )
        })?;
        let lambdas = self.samples(&[]);
        let config = ImagingConfig {
            eta_bg: self.cfg.background(),
            eta_i,
            lambda_samples: lambdas.clone(),
            tol: self.cfg.run.tol,
            test_elements: plan.test_elements.clone(),
            candidates: plan.candidates.clone(),
            sign: self.cfg.run.sign,
        };
        if let Rule::AtSample(k) = plan.rule {
            if k >= lambdas.len() {
                return Err(CliError::Usage(format!("imaging.rule_sample {k} exceeds the sample count")));
            }
        }
        let imager = Imager::new(self.model.clone(), config)?;
        let measurement = measure_anomaly(
            &self.model,
            &self.cfg.scenario.eta,
            &lambdas,
            &self.cfg.run.noise,
            self.cfg.run.sign,
        )?;
        let result = imager.reconstruct(&measurement, plan.rule)?;
        let mut checked: Vec<CellSet> = plan.test_elements.clone();
        if !self.cfg.support.is_empty() {
            checked.push(self.cfg.support.clone());
        }
        let threshold = imager.threshold_report(&checked)?;

        let truth = &self.cfg.support;
        let rule = match plan.rule {
            Rule::AllSamples => "all".to_string(),
            Rule::AtSample(k) => format!("sample:{k}"),
        };
        let mut bundle = Bundle::default();
        bundle.add("indicators_upper.csv", indicator_csv(&result.upper_table));
        bundle.add("indicators_lower.csv", indicator_csv(&result.lower_table));
        bundle.add(
            "reconstruction.json",
            to_json(&Out {
                provenance: &self.provenance,
                eta_background: self.cfg.background(),
                eta_inclusion: eta_i,
                lambda_samples: &lambdas,
                rule,
                noise_bound: &measurement.noise_bound,
                measurement_norm: &measurement.norm,
                upper_tol: &result.upper_table.tol,
                lower_tol: &result.lower_table.tol,
                truth: truth.as_slice(),
                upper: result.upper.as_slice(),
                lower: result.lower.as_slice(),
                truth_in_upper: truth.is_subset(&result.upper),
                lower_in_truth: result.lower.is_subset(truth),
                threshold: Threshold {
                    surrogate: threshold.surrogate,
                    max_pole: threshold.max_pole,
                    conservative: threshold.surrogate_is_conservative(),
                },
                test_elements: plan.test_elements.iter().map(CellSet::as_slice).collect(),
                candidates: plan.candidates.iter().map(CellSet::as_slice).collect(),
            }),
        );
        Ok(bundle)
    }
}

fn indicator_csv(table: &IndicatorTable) -> Vec<u8> {
    let mut out = Table::new(["element", "lambda", "raw", "normalized", "tol", "pass"]);
    for j in 0..table.elements.len() {
        for (k, &lambda) in table.lambdas.iter().enumerate() {
            out.push(vec![
                j.to_string(),
                fmt_f64(lambda),
                fmt_f64(table.raw[j][k]),
                fmt_f64(table.normalized[j][k]),
                fmt_f64(table.tol[k]),
                table.passes_at(j, k).to_string(),
            ]);
        }
    }
    out.to_bytes()
}
