//! Run configuration, read from a TOML document.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use shapemmr::firststage::{EstimatorSpec, ProjectionOptions};
use shapemmr::policy::PolicyClassSpec;
use shapemmr::regret::{Criterion, GammaMethod};
use shapemmr::simlab::{OutcomeFamily, SyntheticDgp};
use shapemmr::{ShapeSpec, TreatmentGrid, UtilitySpec};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub shape: ShapeSpec,
    pub utility: Option<UtilityConfig>,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub policy: PolicyClassSpec,
    #[serde(default)]
    pub criterion: Criterion,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
}

/// Either explicit `values` or `start`, `step`, `stop`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub values: Option<Vec<f64>>,
    pub start: Option<f64>,
    pub step: Option<f64>,
    pub stop: Option<f64>,
    pub observed: Vec<f64>,
}

/// Either `alpha` and `full_price` (price subsidy), or per-level `benefit`
/// and `cost`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityConfig {
    pub alpha: Option<f64>,
    pub full_price: Option<f64>,
    pub benefit: Option<Vec<f64>>,
    pub cost: Option<Vec<f64>>,
    /// Bound on the absolute value of every coefficient.
    #[serde(default = "default_bound")]
    pub bound: f64,
}

fn default_bound() -> f64 {
    1e6
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub gamma_method: GammaMethod,
    /// Repair estimates without a shape-consistent extension before
    /// computing regret.
    #[serde(default = "default_true")]
    pub project: bool,
    #[serde(default = "default_projection_tol")]
    pub projection_tol: f64,
    #[serde(default = "default_projection_max_iter")]
    pub projection_max_iter: usize,
}

fn default_true() -> bool {
    true
}
fn default_projection_tol() -> f64 {
    ProjectionOptions::default().gap_tol
}
fn default_projection_max_iter() -> usize {
    ProjectionOptions::default().max_iter
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma_method: GammaMethod::default(),
            project: true,
            projection_tol: default_projection_tol(),
            projection_max_iter: default_projection_max_iter(),
        }
    }
}

impl SolverConfig {
    pub fn projection(&self) -> ProjectionOptions {
        ProjectionOptions {
            gap_tol: self.projection_tol,
            max_iter: self.projection_max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// Treatment values whose regret-maximizing curves are written; defaults
    /// to the levels the chosen policy assigns.
    #[serde(default)]
    pub worstcase_levels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_sample_sizes")]
    pub sample_sizes: Vec<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Custom design on the configured grid, shape and utility; the built-in
    /// design is used when absent.
    pub design: Option<DesignConfig>,
}

fn default_sample_sizes() -> Vec<usize> {
    vec![400, 1600, 6400]
}
fn default_replications() -> usize {
    200
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            sample_sizes: default_sample_sizes(),
            replications: default_replications(),
            design: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub cells: Vec<Vec<f64>>,
    pub probabilities: Vec<f64>,
    pub m_true: Vec<Vec<f64>>,
    #[serde(default = "default_outcome")]
    pub outcome: OutcomeFamily,
    pub treatment_probabilities: Vec<f64>,
}

fn default_outcome() -> OutcomeFamily {
    OutcomeFamily::Bernoulli
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| invalid(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn treatment_grid(&self) -> CliResult<TreatmentGrid> {
        let g = self
            .grid
            .as_ref()
            .ok_or_else(|| invalid("config: missing [grid]"))?;
        let grid = match (&g.values, g.start, g.step, g.stop) {
            (Some(v), None, None, None) => TreatmentGrid::new(v.clone(), &g.observed)?,
            (None, Some(a), Some(h), Some(b)) => TreatmentGrid::arithmetic(a, h, b, &g.observed)?,
            _ => {
                return Err(invalid(
                    "config: [grid] needs either `values` or `start`, `step` and `stop`",
                ))
            }
        };
        Ok(grid)
    }

    pub fn utility_spec(&self, grid: &TreatmentGrid) -> CliResult<UtilitySpec> {
        let u = self
            .utility
            .as_ref()
            .ok_or_else(|| invalid("config: missing [utility]"))?;
        let spec = match (u.alpha, u.full_price, &u.benefit, &u.cost) {
            (Some(alpha), Some(full), None, None) => UtilitySpec::subsidy(grid, alpha, full),
            (None, None, Some(b), cost) => {
                let c = cost.clone().unwrap_or_else(|| vec![0.0; b.len()]);
                UtilitySpec::per_level(b.clone(), c)?
            }
            _ => {
                return Err(invalid(
                    "config: [utility] needs either `alpha` and `full_price`, or `benefit` (and optionally `cost`)",
                ))
            }
        };
        spec.validate(grid, u.bound)?;
        Ok(spec)
    }

    /// Checks everything a data command needs before any computation.
    pub fn validate_for_data(&self) -> CliResult<(TreatmentGrid, UtilitySpec)> {
        let grid = self.treatment_grid()?;
        let u = self.utility_spec(&grid)?;
        self.shape.validate()?;
        if self.shape.is_empty() {
            return Err(invalid("config: [shape] declares no restriction"));
        }
        self.estimator.validate()?;
        let p = self.solver.projection_tol;
        if !(p > 0.0) || self.solver.projection_max_iter == 0 {
            return Err(invalid(
                "config: projection tolerance and iteration limit must be positive",
            ));
        }
        Ok((grid, u))
    }

    pub fn design(&self) -> CliResult<SyntheticDgp> {
        let dgp = match &self.simulation.design {
            None => SyntheticDgp::default_design(),
            Some(d) => {
                let grid = self.treatment_grid()?;
                let utility = self.utility_spec(&grid)?;
                SyntheticDgp {
                    grid,
                    cells: d.cells.clone(),
                    probabilities: d.probabilities.clone(),
                    m_true: d.m_true.clone(),
                    outcome: d.outcome,
                    treatment_probabilities: d.treatment_probabilities.clone(),
                    shape: self.shape,
                    utility,
                }
            }
        };
        dgp.validate()?;
        self.estimator.validate()?;
        self.policy.validate(dgp.cells[0].len())?;
        if self.simulation.replications == 0 || self.simulation.sample_sizes.is_empty() {
            return Err(invalid(
                "config: simulation needs sample sizes and at least one replication",
            ));
        }
        Ok(dgp)
    }
}
