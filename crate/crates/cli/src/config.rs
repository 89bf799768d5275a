//! Run configuration: one JSON document, optionally overridden by flags.

use std::path::PathBuf;

use rhm_core::experiments::{default_a_grid, default_n_max, DEFAULT_REPS, DEFAULT_SMOOTHNESS, DEFAULT_WIDTH};
use rhm_core::hull::{McParams, DEFAULT_SAMPLES, MIN_SAMPLES};
use rhm_core::selectors::DEFAULT_ALPHA;
use rhm_core::SigmaSpec;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<SigmaSpec>,
    /// Several spectra run back to back (e.g. direct and inverse ratio curves).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub problems: Vec<SigmaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hull: Option<HullConfig>,
    #[serde(default)]
    pub selector: SelectorConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HullConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub monotonize: bool,
    /// Table size; defaults to the largest bandwidth the run needs.
    #[serde(default, rename = "N_max", alias = "n_max", skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

impl Default for HullConfig {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            seed: 0,
            monotonize: true,
            n_max: None,
            cache_dir: None,
        }
    }
}

impl HullConfig {
    pub fn mc(&self) -> McParams {
        McParams {
            samples: self.samples,
            seed: self.seed,
            monotonize: self.monotonize,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Ure,
    Rhm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectorConfig {
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodName>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Search range `1..=N_max`; defaults to the data length.
    #[serde(default, rename = "N_max", alias = "n_max", skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            methods: default_methods(),
            alpha: DEFAULT_ALPHA,
            n_max: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Stem,
    Ratio,
    Efficiency,
    Select,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_kind")]
    pub kind: ExperimentKind,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_grid: Option<Vec<f64>>,
    /// Signal amplitude for stem runs; zero gives the zero signal.
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default = "default_width", rename = "W")]
    pub width: f64,
    #[serde(default = "default_smoothness", rename = "m")]
    pub smoothness: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Bandwidth range for ratio curves, `[first, last]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_range: Option<[usize; 2]>,
    /// Data file for `kind = "select"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            reps: default_reps(),
            a_grid: None,
            amplitude: 0.0,
            width: DEFAULT_WIDTH,
            smoothness: DEFAULT_SMOOTHNESS,
            n_max: None,
            seed: 0,
            n_range: None,
            data: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_out() }
    }
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}
fn yes() -> bool {
    true
}
fn default_methods() -> Vec<MethodName> {
    vec![MethodName::Ure, MethodName::Rhm]
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_kind() -> ExperimentKind {
    ExperimentKind::Efficiency
}
fn default_reps() -> usize {
    DEFAULT_REPS
}
fn default_width() -> f64 {
    DEFAULT_WIDTH
}
fn default_smoothness() -> f64 {
    DEFAULT_SMOOTHNESS
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn field_error(field: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {message}"))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    /// Spectra to run, `problem` first.
    pub fn specs(&self) -> Vec<SigmaSpec> {
        self.problem.iter().chain(&self.problems).cloned().collect()
    }

    pub fn hull_cache_dir(&self) -> PathBuf {
        self.hull
            .as_ref()
            .and_then(|h| h.cache_dir.clone())
            .unwrap_or_else(|| self.output.dir.join("hulls"))
    }

    /// Data length for simulated experiments on `spec`.
    pub fn n_max_for(&self, spec: &SigmaSpec) -> usize {
        self.experiment.n_max.unwrap_or_else(|| default_n_max(spec))
    }

    pub fn a_grid(&self) -> Vec<f64> {
        self.experiment.a_grid.clone().unwrap_or_else(default_a_grid)
    }

    /// Field-level checks of every value an operation will consume.
    pub fn validate(&self) -> Result<(), CliError> {
        let specs = self.specs();
        if specs.is_empty() {
            return Err(field_error("problem", "a noise spectrum is required"));
        }
        for (i, spec) in specs.iter().enumerate() {
            let field = if self.problem.is_some() && i == 0 {
                "problem".to_string()
            } else {
                format!("problems[{}]", i - usize::from(self.problem.is_some()))
            };
            spec.validate().map_err(|e| field_error(&field, e))?;
            if let Some(n) = self.experiment.n_max {
                spec.check_domain(n).map_err(|e| field_error("experiment.n_max", e))?;
            }
        }
        if let Some(h) = &self.hull {
            if h.samples < MIN_SAMPLES {
                return Err(field_error(
                    "hull.samples",
                    format!("must be >= {MIN_SAMPLES}, got {}", h.samples),
                ));
            }
            if h.n_max == Some(0) {
                return Err(field_error("hull.N_max", "must be >= 1"));
            }
        }
        let s = &self.selector;
        if !(s.alpha.is_finite() && s.alpha >= 0.0) {
            return Err(field_error(
                "selector.alpha",
                format!("must be finite and >= 0, got {}", s.alpha),
            ));
        }
        if s.methods.is_empty() {
            return Err(field_error("selector.methods", "at least one method is required"));
        }
        if s.n_max == Some(0) {
            return Err(field_error("selector.N_max", "must be >= 1"));
        }
        let e = &self.experiment;
        if e.reps < 2 {
            return Err(field_error("experiment.reps", format!("must be >= 2, got {}", e.reps)));
        }
        if e.n_max == Some(0) {
            return Err(field_error("experiment.n_max", "must be >= 1"));
        }
        if let Some(grid) = &e.a_grid {
            if grid.is_empty() {
                return Err(field_error("experiment.a_grid", "must not be empty"));
            }
            if grid.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
                return Err(field_error("experiment.a_grid", "amplitudes must be finite and >= 0"));
            }
        }
        if !(e.amplitude.is_finite() && e.amplitude >= 0.0) {
            return Err(field_error("experiment.amplitude", "must be finite and >= 0"));
        }
        if !(e.width.is_finite() && e.width > 0.0) {
            return Err(field_error("experiment.W", "must be finite and > 0"));
        }
        if !(e.smoothness.is_finite() && e.smoothness > 0.0) {
            return Err(field_error("experiment.m", "must be finite and > 0"));
        }
        if let Some([lo, hi]) = e.n_range {
            if lo == 0 || hi < lo {
                return Err(field_error(
                    "experiment.n_range",
                    format!("need 1 <= first <= last, got [{lo}, {hi}]"),
                ));
            }
        }
        Ok(())
    }
}
