//! Run configuration. Every key is checked at parse time; unknown keys are rejected.

use mixed_greens::dynamics::{ModelSpec, Representation};
use mixed_greens::greens::AssembleOptions;
use mixed_greens::pathfinder::{BoundaryCondition, SearchParams};
use mixed_greens::transforms::{Axis, QuadratureOptions, DEFAULT_SEW_THRESHOLD, DEFAULT_SEW_WIDTH};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// A failure the user can fix in the config or on the command line (exit 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<ModelSpec>,
    /// Indices `α` of the coordinates held in momentum space.
    #[serde(default)]
    pub representation: Vec<usize>,
    /// Transformed coordinates at the start: `p_i` for `i ∈ α`, `q_i` otherwise.
    pub initial: Option<Vec<f64>>,
    #[serde(rename = "final")]
    pub final_: Option<Vec<f64>>,
    pub hbar: Option<f64>,
    pub energy: Option<f64>,
    pub energies: Option<EnergyGrid>,
    #[serde(default)]
    pub search: SearchParams,
    #[serde(default)]
    pub assemble: AssembleOptions,
    pub oracle_compare: Option<OracleCompareConfig>,
    pub uniformize: Option<UniformizeConfig>,
    /// Output directory; `--out` takes precedence.
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnergyGrid {
    List(Vec<f64>),
    Range(EnergyRange),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyRange {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl EnergyGrid {
    pub fn values(&self) -> Result<Vec<f64>, UsageError> {
        match self {
            EnergyGrid::List(v) => Ok(v.clone()),
            EnergyGrid::Range(r) => match r.count {
                0 => Err(UsageError("energies.count must be at least 1".into())),
                1 => Ok(vec![r.start]),
                c => Ok((0..c)
                    .map(|i| r.start + (r.stop - r.start) * i as f64 / (c - 1) as f64)
                    .collect()),
            },
        }
    }
}

/// Where sampled integrands come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrand {
    /// Run the semiclassical pipeline at every grid point.
    #[default]
    Assemble,
    /// Closed-form oscillator sum; one-dimensional harmonic models only.
    OscillatorClosedForm,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleCompareConfig {
    pub hbars: Vec<f64>,
    /// Integration axes for `q″_α` then `q′_α`, one per transformed coordinate and end.
    pub axes: Vec<Axis>,
    #[serde(default)]
    pub quadrature: QuadratureOptions,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub integrand: Integrand,
}

fn default_tolerance() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentumSource {
    Assemble,
    OscillatorClosedForm,
    /// A grid file in the documented format.
    File(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformizeConfig {
    /// Positions `q″_a` of the single transformed coordinate `a`.
    pub window: Axis,
    /// Momentum axis used for both `p″_a` and `p′_a`.
    pub momentum_axis: Option<Axis>,
    pub momentum_source: MomentumSource,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_width")]
    pub width: f64,
}

fn default_threshold() -> f64 {
    DEFAULT_SEW_THRESHOLD
}

fn default_width() -> f64 {
    DEFAULT_SEW_WIDTH
}

pub fn load(path: &Path) -> Result<(RunConfig, serde_json::Value), UsageError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    // serde_json messages end with "at line L column C".
    let located = |e: serde_json::Error| UsageError(format!("{}: {e}", path.display()));
    let config: RunConfig = serde_json::from_str(&text).map_err(located)?;
    let echo: serde_json::Value = serde_json::from_str(&text).map_err(located)?;
    Ok((config, echo))
}

fn required<'a, T>(field: &'a Option<T>, name: &str, command: &str) -> Result<&'a T, UsageError> {
    field
        .as_ref()
        .ok_or_else(|| UsageError(format!("config key `{name}` is required by `{command}`")))
}

impl RunConfig {
    pub fn model(&self, command: &str) -> Result<&ModelSpec, UsageError> {
        let m = required(&self.model, "model", command)?;
        m.validate().map_err(|e| UsageError(format!("config key `model`: {e}")))?;
        Ok(m)
    }

    pub fn hbar(&self, command: &str) -> Result<f64, UsageError> {
        let h = *required(&self.hbar, "hbar", command)?;
        if !(h > 0.0 && h.is_finite()) {
            return Err(UsageError(format!("config key `hbar` must be positive, got {h}")));
        }
        Ok(h)
    }

    pub fn rep(&self, command: &str) -> Result<Representation, UsageError> {
        let n = self.model(command)?.n;
        Representation::new(n, &self.representation)
            .map_err(|e| UsageError(format!("config key `representation`: {e}")))
    }

    pub fn search(&self) -> Result<&SearchParams, UsageError> {
        self.search
            .validate()
            .map_err(|e| UsageError(format!("config key `search`: {e}")))?;
        Ok(&self.search)
    }

    /// Boundary condition from `initial`, `final` and the given energy.
    pub fn boundary(&self, command: &str, energy: f64) -> Result<BoundaryCondition, UsageError> {
        let model = self.model(command)?;
        let bc = BoundaryCondition::new(
            self.rep(command)?,
            required(&self.initial, "initial", command)?,
            required(&self.final_, "final", command)?,
            energy,
        );
        bc.validate(model)
            .map_err(|e| UsageError(format!("boundary condition: {e}")))?;
        Ok(bc)
    }
}

pub fn require<'a, T>(field: &'a Option<T>, name: &str, command: &str) -> Result<&'a T, UsageError> {
    required(field, name, command)
}
