//! Experiment configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use bsde_lab_core::estimates::ComparisonSide;
use bsde_lab_core::expr::ExprGenerator;
use bsde_lab_core::generators::{Assumption, WeightParams};
use bsde_lab_core::solver::{BasisConfig, ImplicitConfig, PicardConfig, SolverConfig};
use bsde_lab_core::timepaths::{Spacing, StoppingTimeSpec};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Prefix of the run directory name.
    #[serde(default = "default_name")]
    pub name: String,
    pub generator: GeneratorChoice,
    /// Defaults to the preset's rule, or `τ = t_max` for expressions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopping: Option<StoppingTimeSpec>,
    pub grid: GridConfig,
    pub n_paths: usize,
    pub seed: u64,
    /// Defaults to the standard constants with the preset's suggested `M`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<WeightParams>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub checks: CheckRequest,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_name() -> String {
    "run".into()
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorChoice {
    Preset(String),
    Expression(Box<ExprGenerator>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Defaults to the preset horizon, or 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    pub n_steps: usize,
    #[serde(default = "uniform")]
    pub spacing: Spacing,
}

fn uniform() -> Spacing {
    Spacing::Uniform
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Truncation when a schedule is set, subdivision for `L¹` presets or
    /// when a plan is set, Picard for `z`-dependent drivers, else one
    /// backward pass.
    #[default]
    Auto,
    Backward,
    Picard,
    Subdivided,
    Truncation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubdivisionOptions {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_q")]
    pub q: f64,
}

fn default_n() -> usize {
    4
}

fn default_q() -> f64 {
    2.0
}

impl Default for SubdivisionOptions {
    fn default() -> Self {
        Self { n: default_n(), q: default_q() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub scheme: Scheme,
    pub basis: BasisConfig,
    pub weighted_coordinates: bool,
    pub implicit: ImplicitConfig,
    pub picard: PicardConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subdivision: Option<SubdivisionOptions>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation_schedule: Option<Vec<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        let c = SolverConfig::default();
        Self {
            scheme: Scheme::Auto,
            basis: c.basis,
            weighted_coordinates: c.weighted_coordinates,
            implicit: c.implicit,
            picard: c.picard,
            subdivision: None,
            truncation_schedule: None,
        }
    }
}

impl SolverOptions {
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            basis: self.basis.clone(),
            weighted_coordinates: self.weighted_coordinates,
            implicit: self.implicit.clone(),
            picard: self.picard.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    ZBound,
    FullBound,
}

impl EstimateKind {
    pub fn label(self) -> &'static str {
        match self {
            EstimateKind::ZBound => "z_bound",
            EstimateKind::FullBound => "full_bound",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonRequest {
    /// Second equation, solved on the same paths; the run's equation is the
    /// lower side `Y`.
    pub other: GeneratorChoice,
    #[serde(default = "side_one")]
    pub side: ComparisonSide,
    #[serde(default = "yes")]
    pub enforce_preconditions: bool,
}

fn side_one() -> ComparisonSide {
    ComparisonSide::I
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckRequest {
    /// `None` checks the declared list.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assumptions: Option<Vec<Assumption>>,
    pub probes: usize,
    pub norms: bool,
    pub estimates: Vec<EstimateKind>,
    /// Extra seeds for the across-seed estimate aggregate.
    pub estimate_seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonRequest>,
}

impl Default for CheckRequest {
    fn default() -> Self {
        Self { assumptions: None, probes: 4000, norms: true, estimates: Vec::new(), estimate_seeds: Vec::new(), comparison: None }
    }
}

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub steps: Option<usize>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| {
            let msg = e.to_string();
            let msg = msg.rsplit_once(" at line ").map_or(msg.as_str(), |(m, _)| m).to_string();
            CliError::Config(format!("line {} column {}: {msg}", e.line(), e.column()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(n) = o.paths {
            self.n_paths = n;
        }
        if let Some(n) = o.steps {
            self.grid.n_steps = n;
        }
        if let Some(p) = &o.out {
            self.out = p.clone();
        }
    }

    /// Field-level checks that do not need simulated paths.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: String| Err(CliError::Config(format!("field `{field}`: {msg}")));
        if self.n_paths == 0 {
            return bad("n_paths", "must be at least 1".into());
        }
        if self.grid.n_steps == 0 {
            return bad("grid.n_steps", "must be at least 1".into());
        }
        if let Some(t) = self.grid.t_max {
            if !(t.is_finite() && t > 0.0) {
                return bad("grid.t_max", format!("must be positive, got {t}"));
            }
        }
        if let Some(p) = &self.params {
            p.validate().map_err(|e| CliError::Config(format!("field `params`: {e}")))?;
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad("name", format!("must be a plain non-empty file name, got {:?}", self.name));
        }
        if let GeneratorChoice::Preset(n) = &self.generator {
            if !bsde_lab_core::generators::gallery_names().contains(&n.as_str()) {
                return bad("generator.preset", format!("unknown preset '{n}'"));
            }
        }
        if let Some(s) = &self.solver.subdivision {
            if s.n == 0 {
                return bad("solver.subdivision.n", "must be at least 1".into());
            }
            if !(s.q > 1.0) {
                return bad("solver.subdivision.q", format!("must exceed 1, got {}", s.q));
            }
        }
        if let Some(s) = &self.solver.truncation_schedule {
            if s.is_empty() || s.iter().any(|n| !(*n > 0.0 && n.is_finite())) || s.windows(2).any(|w| w[1] <= w[0]) {
                return bad("solver.truncation_schedule", format!("must be positive and increasing, got {s:?}"));
            }
        }
        if self.solver.picard.max_iters == 0 {
            return bad("solver.picard.max_iters", "must be at least 1".into());
        }
        self.solver.basis.validate().map_err(|e| CliError::Config(format!("field `solver.basis`: {e}")))?;
        if self.checks.probes == 0 && self.checks.assumptions.as_ref().is_none_or(|a| !a.is_empty()) {
            return bad("checks.probes", "must be at least 1 when assumptions are checked".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"generator": {"preset": "martingale"}, "grid": {"n_steps": 10}, "n_paths": 100, "seed": 3}"#;

    #[test]
    fn round_trip_is_lossless() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.out, PathBuf::from("runs"));
        assert_eq!(c.checks.probes, 4000);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let t = MINIMAL.replace("\"seed\": 3", "\"seed\": 3, \"sed\": 4");
        assert!(matches!(ExperimentConfig::from_json(&t), Err(CliError::Config(m)) if m.contains("sed")));
        let t = MINIMAL.replace("\"n_steps\": 10", "\"n_steps\": 10, \"dt\": 1");
        assert!(ExperimentConfig::from_json(&t).is_err());
    }

    #[test]
    fn validation_names_the_field() {
        let t = MINIMAL.replace("\"n_steps\": 10", "\"n_steps\": 0");
        match ExperimentConfig::from_json(&t) {
            Err(CliError::Config(m)) => assert!(m.contains("grid.n_steps"), "{m}"),
            other => panic!("{other:?}"),
        }
        let t = MINIMAL.replace("martingale", "nope");
        assert!(ExperimentConfig::from_json(&t).is_err());
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        match ExperimentConfig::from_json("{\n \"generator\": ,\n}") {
            Err(CliError::Config(m)) => assert!(m.starts_with("line 2"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn expression_generators_parse() {
        let t = r#"{"generator": {"expression": {"k": 1, "d": 1, "driver": ["-y1"], "terminal": ["b1"], "mu": "1", "declared": ["H4"]}},
                   "grid": {"t_max": 1.0, "n_steps": 10}, "n_paths": 10, "seed": 1,
                   "solver": {"scheme": "picard", "picard": {"tol": 1e-8}, "subdivision": {"n": 3}}}"#;
        let c = ExperimentConfig::from_json(t).unwrap();
        assert_eq!(c.solver.subdivision.as_ref().unwrap().q, 2.0);
        assert_eq!(c, ExperimentConfig::from_json(&c.to_json()).unwrap());
    }
}
