//! Scenario documents in TOML.
//!
//! ```toml
//! [grid]
//! nx = 6
//! ny = 6
//! h = 0.01
//! d = 0.001
//! origin = [0.0, 0.0]
//!
//! [resistivity]
//! background = 1e-6
//! [[resistivity.inclusions]]
//! rect = [2, 2, 2, 2]   # i0, j0, width, height
//! value = 1e-5
//!
//! [[coils]]
//! vertices = [[0.0, 0.0, 0.002], [0.02, 0.0, 0.002], [0.02, 0.02, 0.002], [0.0, 0.0, 0.002]]
//!
//! [run]
//! seed = 7
//! noise_delta = 1e-3
//! ```

use serde::{Deserialize, Serialize};

use crate::assembly::default_wire_radius;
use crate::error::MitError;
use crate::geometry::{
    build_grid, cover_with_test_elements, CellSet, Coil, CoilSet, GridSpec, Orientation, ResistivityMap,
    Scenario,
};
use crate::imaging::{NoiseScale, NoiseSpec, Rule};
use crate::monotonicity::Tolerance;
use crate::transfer::{SignConvention, SIGN_CONVENTION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    pub grid: GridSection,
    pub resistivity: ResistivitySection,
    pub coils: Vec<CoilSection>,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imaging: Option<ImagingSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub d: f64,
    #[serde(default)]
    pub origin: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wire_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResistivitySection {
    pub background: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inclusions: Vec<InclusionSection>,
}

/// Exactly one of `cells` and `rect` must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InclusionSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<usize>>,
    /// `[i0, j0, width, height]` in cells.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rect: Option<[usize; 4]>,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrientationName {
    #[default]
    Forward,
    Reverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoilSection {
    pub vertices: Vec<[f64; 3]>,
    #[serde(default)]
    pub orientation: OrientationName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseScaleName {
    #[default]
    Relative,
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_samples: Option<Vec<f64>>,
    /// Relative PSD tolerance (times `‖H‖₂`); default 1e-12.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Absolute PSD tolerance; default 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_abs: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise_delta: f64,
    #[serde(default)]
    pub noise_scale: NoiseScaleName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign_convention_override: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImagingSection {
    /// Resistivity of test inclusions; defaults to the common value of
    /// the scenario inclusions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inclusion_value: Option<f64>,
    /// `[width, height, stride]` of the upper-bound test elements.
    #[serde(default = "unit_block")]
    pub test_block: [usize; 3],
    /// `[width, height, stride]` of the lower-bound candidates; the whole
    /// plate is the only candidate when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_block: Option<[usize; 3]>,
    /// Single-sample rule at this λ index; all samples when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_sample: Option<usize>,
}

fn unit_block() -> [usize; 3] {
    [1, 1, 1]
}

impl Default for ImagingSection {
    fn default() -> Self {
        ImagingSection {
            inclusion_value: None,
            test_block: unit_block(),
            candidate_block: None,
            rule_sample: None,
        }
    }
}

/// Parse or validation failure, located by line or by field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub location: String,
    pub message: String,
}

impl ParseError {
    fn at(path: impl Into<String>, message: impl std::fmt::Display) -> Self {
        ParseError {
            location: path.into(),
            message: message.to_string(),
        }
    }
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.location.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.location, self.message)
        }
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Explicit samples; the default grid is derived from the background
    /// pole when absent.
    pub lambda_samples: Option<Vec<f64>>,
    pub tol: Tolerance,
    pub seed: u64,
    pub noise: NoiseSpec,
    pub sign: SignConvention,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImagingPlan {
    pub eta_i: Option<f64>,
    pub test_elements: Vec<CellSet>,
    pub candidates: Vec<CellSet>,
    pub rule: Rule,
}

/// A validated scenario document.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub document: ScenarioDocument,
    pub scenario: Scenario,
    pub wire_radius: f64,
    pub run: RunConfig,
    pub imaging: ImagingPlan,
    /// Cells whose resistivity differs from the background.
    pub support: CellSet,
}

impl ScenarioConfig {
    pub fn background(&self) -> f64 {
        self.document.resistivity.background
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Reads and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ParseError> {
    let document: ScenarioDocument = toml::from_str(text).map_err(|e| {
        let location = e
            .span()
            .map(|s| format!("line {}", line_of(text, s.start)))
            .unwrap_or_default();
        ParseError::at(location, e.message().trim())
    })?;
    validate_document(document)
}

/// Renders a document back to TOML.
pub fn render_scenario(document: &ScenarioDocument) -> String {
    toml::to_string(document).expect("scenario documents always serialize")
}

fn field<T>(path: &str, r: crate::Result<T>) -> Result<T, ParseError> {
    r.map_err(|e| ParseError::at(path, e))
}

fn positive(path: &str, v: f64) -> Result<f64, ParseError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(ParseError::at(path, format!("must be positive and finite, got {v}")))
    }
}

fn block_cover(grid: &GridSpec, path: &str, block: [usize; 3]) -> Result<Vec<CellSet>, ParseError> {
    if block.contains(&0) {
        return Err(ParseError::at(path, "block width, height and stride must be at least 1"));
    }
    Ok(cover_with_test_elements(grid, block[0], block[1], block[2]))
}

/// Validates a deserialized document.
pub fn validate_document(document: ScenarioDocument) -> Result<ScenarioConfig, ParseError> {
    let g = &document.grid;
    let grid = build_grid(g.nx, g.ny, g.h, g.d, g.origin).map_err(|e| {
        let path = match e {
            MitError::DimensionTooSmall { .. } => "grid.nx",
            MitError::InvalidGrid(ref m) if m.contains("thickness") => "grid.d",
            MitError::InvalidGrid(ref m) if m.contains("origin") => "grid.origin",
            _ => "grid.h",
        };
        ParseError::at(path, e)
    })?;
    let wire_radius = match g.wire_radius {
        Some(r) => {
            positive("grid.wire_radius", r)?;
            if r >= 0.5 * grid.h {
                return Err(ParseError::at("grid.wire_radius", format!("must be below h/2 = {}", 0.5 * grid.h)));
            }
            r
        }
        None => default_wire_radius(&grid),
    };

    let res = &document.resistivity;
    let background = positive("resistivity.background", res.background)?;
    let count = grid.cell_count();
    let mut values = vec![background; count];
    let mut covered = CellSet::empty();
    for (k, inc) in res.inclusions.iter().enumerate() {
        let base = format!("resistivity.inclusions[{k}]");
        positive(&format!("{base}.value"), inc.value)?;
        let cells = match (&inc.cells, &inc.rect) {
            (Some(cells), None) => field(&format!("{base}.cells"), CellSet::new(cells.iter().copied(), count))?,
            (None, Some([i0, j0, w, h])) => {
                if *w == 0 || *h == 0 || i0 + w > grid.nx || j0 + h > grid.ny {
                    return Err(ParseError::at(
                        format!("{base}.rect"),
                        format!("rectangle [{i0}, {j0}, {w}, {h}] does not fit the {}x{} grid", grid.nx, grid.ny),
                    ));
                }
                CellSet::rect(&grid, *i0, *j0, *w, *h)
            }
            _ => return Err(ParseError::at(base, "give exactly one of `cells` and `rect`")),
        };
        if let Some(dup) = cells.iter().find(|&c| covered.contains(c)) {
            return Err(ParseError::at(format!("{base}.cells"), MitError::DuplicateCell(dup)));
        }
        covered = covered.union(&cells);
        for c in cells.iter() {
            values[c] = inc.value;
        }
    }
    let eta = field("resistivity", ResistivityMap::new(values))?;
    let support = CellSet::new(
        (0..count).filter(|&c| eta.values()[c] != background),
        count,
    )
    .expect("indices are distinct and in range");

    if document.coils.is_empty() {
        return Err(ParseError::at("coils", "at least one coil is required"));
    }
    let mut coils = Vec::with_capacity(document.coils.len());
    for (k, c) in document.coils.iter().enumerate() {
        let orientation = match c.orientation {
            OrientationName::Forward => Orientation::Forward,
            OrientationName::Reverse => Orientation::Reverse,
        };
        let coil = Coil::new(c.vertices.clone(), orientation)
            .map_err(|e| ParseError::at(format!("coils[{k}].vertices"), e))?;
        coils.push(coil);
    }
    let coils = CoilSet::new(coils);
    if let Err(MitError::CoilIntersectsConductor { index }) = coils.check_clear_of(&grid) {
        return Err(ParseError::at(
            format!("coils[{index}].vertices"),
            MitError::CoilIntersectsConductor { index },
        ));
    }
    let scenario = field("coils", Scenario::new(grid, eta, coils))?;

    let run = &document.run;
    if let Some(samples) = &run.lambda_samples {
        if samples.is_empty() {
            return Err(ParseError::at("run.lambda_samples", "must not be empty"));
        }
        if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
            return Err(ParseError::at("run.lambda_samples", format!("sample {bad} is not finite")));
        }
    }
    let tol = Tolerance::new(run.tol_abs.unwrap_or(0.0), run.tol.unwrap_or(Tolerance::NOISELESS.rel))
        .map_err(|e| ParseError::at("run.tol", e))?;
    if !(run.noise_delta.is_finite() && run.noise_delta >= 0.0) {
        return Err(ParseError::at("run.noise_delta", "must be non-negative and finite"));
    }
    let sign = match run.sign_convention_override {
        None => SIGN_CONVENTION,
        Some(v) => SignConvention::from_value(v)
            .ok_or_else(|| ParseError::at("run.sign_convention_override", "must be +1 or -1"))?,
    };
    let run_config = RunConfig {
        lambda_samples: run.lambda_samples.clone(),
        tol,
        seed: run.seed,
        noise: NoiseSpec {
            level: run.noise_delta,
            scale: match run.noise_scale {
                NoiseScaleName::Relative => NoiseScale::Relative,
                NoiseScaleName::Absolute => NoiseScale::Absolute,
            },
            seed: run.seed,
        },
        sign,
    };

    let section = document.imaging.clone().unwrap_or_default();
    let eta_i = match section.inclusion_value {
        Some(v) => {
            positive("imaging.inclusion_value", v)?;
            if v <= background {
                return Err(ParseError::at(
                    "imaging.inclusion_value",
                    format!("must exceed the background resistivity {background}"),
                ));
            }
            Some(v)
        }
        None => {
            let mut vals: Vec<f64> = res.inclusions.iter().map(|i| i.value).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            match vals.as_slice() {
                [v] if *v > background => Some(*v),
                _ => None,
            }
        }
    };
    let test_elements = block_cover(&grid, "imaging.test_block", section.test_block)?;
    let candidates = match section.candidate_block {
        Some(b) => block_cover(&grid, "imaging.candidate_block", b)?,
        None => vec![CellSet::all(&grid)],
    };
    let rule = match section.rule_sample {
        Some(k) => {
            if let Some(s) = &run.lambda_samples {
                if k >= s.len() {
                    return Err(ParseError::at("imaging.rule_sample", format!("no lambda sample with index {k}")));
                }
            } else if k >= crate::imaging::DEFAULT_SAMPLE_COUNT {
                return Err(ParseError::at("imaging.rule_sample", format!("no lambda sample with index {k}")));
            }
            Rule::AtSample(k)
        }
        None => Rule::AllSamples,
    };

    Ok(ScenarioConfig {
        scenario,
        wire_radius,
        run: run_config,
        imaging: ImagingPlan {
            eta_i,
            test_elements,
            candidates,
            rule,
        },
        support,
        document,
    })
}
