//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wiener_core::grid::{DiscretePath, TimeGrid};
use wiener_core::stochastic::{mixture_drift, DriftProcessSpec, MinimizerConfig};
use wiener_core::variational::{BoundaryCondition, ShootingConfig};
use wiener_core::{DriftKernel, Polynomial};

use crate::CliError;

pub const MAX_STEPS: usize = 1_000_000;
pub const MAX_PATHS: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemSpec>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub ensemble: EnsembleSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub minimizer: MinimizerSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftSpec>,
    #[serde(default)]
    pub outputs: OutputSpec,
}

fn default_horizon() -> f64 {
    1.0
}

/// Exactly one of a drift kernel or an integral/terminal cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Kernel(KernelSpec),
    Cost(CostSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `f(t)` with coefficients in ascending powers of `t`.
    DeterministicPoly { coeffs: Vec<f64> },
    /// `f(t, x) = Σ a_k(t) x^k`; row `k` holds `a_k` in ascending powers of `t`.
    SpacePoly { coeffs: Vec<Vec<f64>> },
    /// `f(t) = amplitude · sin(frequency · t + phase)`.
    Harmonic {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    /// Running cost `g`, ascending coefficients.
    #[serde(default)]
    pub g: Vec<f64>,
    /// Terminal cost `G`, ascending coefficients.
    #[serde(default, rename = "G")]
    pub terminal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { n: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub paths: usize,
    pub seed: u64,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self {
            paths: 10_000,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub boundary: BoundaryCondition,
    pub slope_bracket: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub scan_a: bool,
    pub scan_range: (f64, f64),
    pub scan_points: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let s = ShootingConfig::default();
        Self {
            boundary: BoundaryCondition::FreeEndpoint,
            slope_bracket: s.slope_bracket,
            tolerance: s.tolerance,
            max_iterations: s.max_iterations,
            scan_a: false,
            scan_range: (-4.0, 4.0),
            scan_points: 33,
        }
    }
}

impl SolverSpec {
    pub fn shooting(&self) -> ShootingConfig {
        ShootingConfig {
            slope_bracket: self.slope_bracket,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinimizerSpec {
    pub steps: usize,
    pub learn_rate: f64,
    pub tolerance: f64,
    /// Starting path; zero when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<PathSpec>,
}

impl Default for MinimizerSpec {
    fn default() -> Self {
        let m = MinimizerConfig::default();
        Self {
            steps: m.steps,
            learn_rate: m.learn_rate,
            tolerance: m.tolerance,
            init: None,
        }
    }
}

impl MinimizerSpec {
    pub fn config(&self) -> MinimizerConfig {
        MinimizerConfig {
            steps: self.steps,
            learn_rate: self.learn_rate,
            tolerance: self.tolerance,
        }
    }
}

/// A path on the run grid: polynomial coefficients in `t` or explicit node values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PathSpec {
    Coeffs(Vec<f64>),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftSpec {
    Deterministic { path: PathSpec },
    StateKernel { kernel: KernelSpec },
    Mixture { components: Vec<PathSpec>, probs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub emit_paths: bool,
    /// Number of X̃ paths written by `simulate`.
    pub emit_xtilde: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            emit_paths: true,
            emit_xtilde: 10,
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            config_err(format!(
                "line {}, column {}, field `{path}`: {inner}",
                inner.line(),
                inner.column()
            ))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(config_err(format!("horizon: must be positive, got {}", self.horizon)));
        }
        if !(1..=MAX_STEPS).contains(&self.grid.n) {
            return Err(config_err(format!(
                "grid.n: must be in 1..={MAX_STEPS}, got {}",
                self.grid.n
            )));
        }
        if !(1..=MAX_PATHS).contains(&self.ensemble.paths) {
            return Err(config_err(format!(
                "ensemble.paths: must be in 1..={MAX_PATHS}, got {}",
                self.ensemble.paths
            )));
        }
        let s = &self.solver;
        if !(s.slope_bracket.is_finite() && s.slope_bracket > 0.0) {
            return Err(config_err("solver.slope_bracket: must be positive"));
        }
        if !(s.tolerance.is_finite() && s.tolerance > 0.0) {
            return Err(config_err("solver.tolerance: must be positive"));
        }
        if !(s.scan_range.0.is_finite() && s.scan_range.1.is_finite() && s.scan_range.0 < s.scan_range.1) {
            return Err(config_err(
                "solver.scan_range: must be a finite interval [lo, hi] with lo < hi",
            ));
        }
        if s.scan_points < 3 {
            return Err(config_err("solver.scan_points: must be at least 3"));
        }
        if let BoundaryCondition::Fixed(a) = s.boundary {
            if !a.is_finite() {
                return Err(config_err("solver.boundary: fixed terminal value must be finite"));
            }
        }
        let m = &self.minimizer;
        if !(m.learn_rate.is_finite() && m.learn_rate > 0.0) {
            return Err(config_err("minimizer.learn_rate: must be positive"));
        }
        if !(m.tolerance.is_finite() && m.tolerance > 0.0) {
            return Err(config_err("minimizer.tolerance: must be positive"));
        }
        Ok(())
    }

    pub fn time_grid(&self) -> Result<TimeGrid, CliError> {
        Ok(TimeGrid::uniform(self.horizon, self.grid.n)?)
    }

    /// The kernel the solvers work with; for a cost, the negated Itô kernel of `C`.
    pub fn solve_kernel(&self) -> Result<DriftKernel, CliError> {
        match &self.problem {
            None => Err(config_err("problem: a kernel or cost specification is required")),
            Some(ProblemSpec::Kernel(k)) => k.build(self.horizon),
            Some(ProblemSpec::Cost(c)) => {
                let (g, big_g) = c.polynomials()?;
                Ok(wiener_core::clark_ocone::ito_kernel(&g, &big_g, self.horizon)?
                    .kernel
                    .negated())
            }
        }
    }

    pub fn drift(&self) -> Result<DriftProcessSpec, CliError> {
        let grid = self.time_grid()?;
        match &self.drift {
            None => Err(config_err("drift: a drift specification is required")),
            Some(DriftSpec::Deterministic { path }) => Ok(DriftProcessSpec::DeterministicPath(path.build(grid)?)),
            Some(DriftSpec::StateKernel { kernel }) => Ok(DriftProcessSpec::StateKernel(kernel.build(self.horizon)?)),
            Some(DriftSpec::Mixture { components, probs }) => {
                let paths = components
                    .iter()
                    .map(|p| p.build(grid))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(mixture_drift(paths, probs.clone())?)
            }
        }
    }

    pub fn init_path(&self) -> Result<DiscretePath, CliError> {
        let grid = self.time_grid()?;
        match &self.minimizer.init {
            None => Ok(DiscretePath::zeros(grid)),
            Some(p) => p.build(grid),
        }
    }
}

impl KernelSpec {
    pub fn build(&self, horizon: f64) -> Result<DriftKernel, CliError> {
        Ok(match self {
            Self::DeterministicPoly { coeffs } => {
                DriftKernel::deterministic_poly(Polynomial::new(coeffs.clone())?, horizon)?
            }
            Self::SpacePoly { coeffs } => {
                let polys = coeffs
                    .iter()
                    .map(|c| Polynomial::new(c.clone()))
                    .collect::<Result<Vec<_>, _>>()?;
                DriftKernel::space_poly(polys, horizon)?
            }
            Self::Harmonic {
                amplitude,
                frequency,
                phase,
            } => {
                if !(amplitude.is_finite() && frequency.is_finite() && phase.is_finite()) {
                    return Err(config_err("harmonic kernel parameters must be finite"));
                }
                let (a, w, p) = (*amplitude, *frequency, *phase);
                DriftKernel::time_callback(horizon, move |t| a * (w * t + p).sin())?
            }
        })
    }
}

impl CostSpec {
    pub fn polynomials(&self) -> Result<(Polynomial, Polynomial), CliError> {
        if self.g.is_empty() && self.terminal.is_empty() {
            return Err(config_err("problem.cost: at least one of g and G must be given"));
        }
        Ok((
            Polynomial::new(self.g.clone())?,
            Polynomial::new(self.terminal.clone())?,
        ))
    }
}

impl PathSpec {
    pub fn build(&self, grid: TimeGrid) -> Result<DiscretePath, CliError> {
        match self {
            Self::Coeffs(c) => {
                let p = Polynomial::new(c.clone())?;
                if p.eval(0.0) != 0.0 {
                    return Err(config_err("path coefficients must vanish at t = 0"));
                }
                Ok(DiscretePath::from_fn(grid, |t| p.eval(t))?)
            }
            Self::Values(v) => {
                if v.len() != grid.len() {
                    return Err(config_err(format!(
                        "path has {} values but the grid has {} nodes",
                        v.len(),
                        grid.len()
                    )));
                }
                Ok(DiscretePath::new(grid, v.clone())?)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_kernel_config() {
        let cfg =
            RunConfig::from_json(r#"{"problem": {"kernel": {"type": "space_poly", "coeffs": [[], [1]]}}}"#).unwrap();
        assert_eq!(cfg.grid.n, 200);
        assert_eq!(cfg.ensemble.seed, 42);
        let k = cfg.solve_kernel().unwrap();
        assert_eq!(k.eval(0.3, 2.0), 2.0);
    }

    #[test]
    fn round_trip() {
        let text = r#"{
            "problem": {"cost": {"g": [0, 0, 0, 1]}},
            "horizon": 2.0,
            "grid": {"n": 50},
            "ensemble": {"paths": 100, "seed": 7},
            "solver": {"boundary": {"fixed": 1.5}, "scan_a": true},
            "minimizer": {"init": {"coeffs": [0, 0.5]}},
            "drift": {"type": "mixture", "components": [{"coeffs": [0, 1]}, {"coeffs": [0, -1]}], "probs": [0.5, 0.5]},
            "outputs": {"dir": "x", "emit_xtilde": 3}
        }"#;
        let cfg = RunConfig::from_json(text).unwrap();
        let again = RunConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.solver.boundary, BoundaryCondition::Fixed(1.5));
    }

    #[test]
    fn unknown_field_names_location() {
        let err = RunConfig::from_json("{\n  \"grid\": {\"n\": 10, \"m\": 3}\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("grid"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn rejects_two_problems() {
        let text = r#"{"problem": {"kernel": {"type": "harmonic"}, "cost": {"g": [1]}}}"#;
        assert!(RunConfig::from_json(text).is_err());
    }

    #[test]
    fn range_checks() {
        for bad in [
            r#"{"horizon": -1}"#,
            r#"{"grid": {"n": 0}}"#,
            r#"{"ensemble": {"paths": 0, "seed": 1}}"#,
            r#"{"solver": {"scan_range": [1, -1]}}"#,
            r#"{"minimizer": {"learn_rate": 0}}"#,
        ] {
            assert!(matches!(RunConfig::from_json(bad), Err(CliError::Config(_))), "{bad}");
        }
    }

    #[test]
    fn missing_problem_is_config_error() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg.solve_kernel().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn path_length_mismatch() {
        let cfg = RunConfig::from_json(
            r#"{"grid": {"n": 4}, "drift": {"type": "deterministic", "path": {"values": [0, 1, 2]}}}"#,
        )
        .unwrap();
        assert_eq!(cfg.drift().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn harmonic_kernel() {
        let cfg = RunConfig::from_json(r#"{"problem": {"kernel": {"type": "harmonic"}}}"#).unwrap();
        let k = cfg.solve_kernel().unwrap();
        assert!((k.eval(0.5, 9.0) - 0.5f64.sin()).abs() < 1e-15);
        assert!(k.is_state_independent());
    }
}
