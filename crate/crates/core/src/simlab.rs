//! Monte Carlo harness: synthetic designs with known response curves,
//! exact population regret, and regret-gap convergence experiments.

use rand::distributions::{Bernoulli, Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::firststage::{estimate, project_feasible, EstimatorSpec};
use crate::policy::{solve_policy, PolicyClassSpec};
use crate::regret::{regret_matrix, Criterion, RegretOptions};
use crate::{
    assign, build_constraints, ConstraintSystem, CovariateTable, Error, Observation, Policy,
    RegretMatrix, ResponseEstimate, Result, ShapeSpec, TreatmentGrid, UtilitySpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum OutcomeFamily {
    Bernoulli,
    Gaussian { sigma: f64 },
}

/// Discrete-covariate design with a known response curve on the full grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDgp {
    pub grid: TreatmentGrid,
    pub cells: Vec<Vec<f64>>,
    pub probabilities: Vec<f64>,
    /// `m_true[cell][j]` over every grid level.
    pub m_true: Vec<Vec<f64>>,
    pub outcome: OutcomeFamily,
    /// Assignment probabilities over the observed levels, in grid order.
    pub treatment_probabilities: Vec<f64>,
    pub shape: ShapeSpec,
    pub utility: UtilitySpec,
}

impl SyntheticDgp {
    /// Four cells on one covariate, grid `{0, 0.5, 1, 1.5, 2}` with the
    /// endpoints observed, decreasing convex takeup on `[0, 1]`, Bernoulli
    /// outcomes and a fair coin over the two observed levels. The benefit
    /// of level `d` is `d` per unit of takeup.
    ///
    /// In every cell the two best levels are `1.5` and `2`, separated by
    /// worst-case regret margins of `-0.01, -0.005, 0.02, 0.04`, so the
    /// low cells prefer `1.5` and the high cells prefer `2`.
    pub fn default_design() -> Self {
        let grid =
            TreatmentGrid::new(vec![0.0, 0.5, 1.0, 1.5, 2.0], &[0.0, 2.0]).expect("valid grid");
        let endpoints = [(0.9, 0.2382), (0.85, 0.2282), (0.8, 0.2327), (0.75, 0.2336)];
        let m_true = endpoints
            .iter()
            .map(|&(a, b)| {
                // Convex decreasing: quadratic through (0, a) and (2, b) with its
                // vertex at d = 2.
                grid.values()
                    .iter()
                    .map(|d| b + (a - b) * (1.0 - d / 2.0).powi(2))
                    .collect()
            })
            .collect();
        let utility =
            UtilitySpec::per_level(grid.values().to_vec(), vec![0.0; grid.len()]).expect("valid");
        Self {
            cells: vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]],
            probabilities: vec![0.25; 4],
            m_true,
            outcome: OutcomeFamily::Bernoulli,
            treatment_probabilities: vec![0.5, 0.5],
            shape: ShapeSpec::decreasing_convex_unit(),
            utility,
            grid,
        }
    }

    pub fn constraints(&self) -> Result<ConstraintSystem> {
        build_constraints(&self.grid, &self.shape)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.cells.len();
        if n == 0 || self.probabilities.len() != n || self.m_true.len() != n {
            return Err(Error::InvalidInput(
                "cells, probabilities and m_true must align".into(),
            ));
        }
        let dim = self.cells[0].len();
        if self.cells.iter().any(|x| x.len() != dim) {
            return Err(Error::InvalidInput(
                "cells must share a covariate dimension".into(),
            ));
        }
        check_distribution(&self.probabilities, "cell probabilities")?;
        if self.treatment_probabilities.len() != self.grid.observed_len() {
            return Err(Error::InvalidInput(
                "one treatment probability per observed level".into(),
            ));
        }
        check_distribution(&self.treatment_probabilities, "treatment probabilities")?;
        if let OutcomeFamily::Gaussian { sigma } = self.outcome {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::InvalidInput("sigma must be positive".into()));
            }
        }
        let cs = self.constraints()?;
        for (c, m) in self.m_true.iter().enumerate() {
            if m.len() != self.grid.len() {
                return Err(Error::InvalidInput(format!(
                    "m_true for cell {c} has the wrong length"
                )));
            }
            if !cs.is_feasible(m, 1e-9) {
                return Err(Error::InvalidInput(format!(
                    "m_true for cell {c} violates the shape restrictions"
                )));
            }
            if self.outcome == OutcomeFamily::Bernoulli
                && m.iter().any(|v| !(0.0..=1.0).contains(v))
            {
                return Err(Error::InvalidInput(format!(
                    "m_true for cell {c} is not a probability"
                )));
            }
        }
        self.utility.validate(&self.grid, f64::MAX)?;
        if self.utility.cell_count().is_some_and(|k| k != n) {
            return Err(Error::InvalidInput(
                "per-cell utility must cover every cell".into(),
            ));
        }
        Ok(())
    }

    /// True response at the observed levels, one row per cell.
    pub fn observed_truth(&self) -> ResponseEstimate {
        let obs = self.grid.observed_indices();
        ResponseEstimate::new(
            self.m_true
                .iter()
                .map(|m| obs.iter().map(|&j| m[j]).collect())
                .collect(),
        )
    }

    /// `n` independent draws of (treatment, outcome, covariates).
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Observation>> {
        let cell_dist = WeightedIndex::new(&self.probabilities)
            .map_err(|e| Error::InvalidInput(format!("cell probabilities: {e}")))?;
        let treat_dist = WeightedIndex::new(&self.treatment_probabilities)
            .map_err(|e| Error::InvalidInput(format!("treatment probabilities: {e}")))?;
        let observed = self.grid.observed_indices();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let c = cell_dist.sample(rng);
            let j = observed[treat_dist.sample(rng)];
            let m = self.m_true[c][j];
            let outcome = match self.outcome {
                OutcomeFamily::Bernoulli => {
                    let p = Bernoulli::new(m).map_err(|e| Error::InvalidInput(e.to_string()))?;
                    if p.sample(rng) {
                        1.0
                    } else {
                        0.0
                    }
                }
                OutcomeFamily::Gaussian { sigma } => Normal::new(m, sigma)
                    .map_err(|e| Error::InvalidInput(e.to_string()))?
                    .sample(rng),
            };
            out.push(Observation {
                treatment: self.grid.value(j),
                outcome,
                covariates: self.cells[c].clone(),
            });
        }
        Ok(out)
    }
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|v| !(*v >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "{what} must be nonnegative and sum to 1"
        )));
    }
    Ok(())
}

/// Population worst-case regret matrix: the identified set built from the
/// true response at the observed levels.
pub fn population_gamma(
    dgp: &SyntheticDgp,
    cs: &ConstraintSystem,
    criterion: Criterion,
) -> Result<RegretMatrix> {
    let opts = RegretOptions {
        criterion,
        ..RegretOptions::default()
    };
    regret_matrix(cs, &dgp.observed_truth(), &dgp.utility, &opts)
}

/// `sum_x P(x) Gamma_{pi(x)}(x)` for a precomputed population matrix.
pub fn population_regret_from(dgp: &SyntheticDgp, gamma: &RegretMatrix, policy: &Policy) -> f64 {
    let assignment: Vec<usize> = dgp
        .cells
        .iter()
        .map(|x| assign(policy, x, &dgp.grid))
        .collect();
    gamma.objective(&dgp.probabilities, &assignment)
}

pub fn population_regret(
    dgp: &SyntheticDgp,
    policy: &Policy,
    cs: &ConstraintSystem,
    criterion: Criterion,
) -> Result<f64> {
    Ok(population_regret_from(
        dgp,
        &population_gamma(dgp, cs, criterion)?,
        policy,
    ))
}

/// Class minimizer of the population objective and its value.
pub fn population_optimum(
    dgp: &SyntheticDgp,
    gamma: &RegretMatrix,
    class: &PolicyClassSpec,
) -> Result<(Policy, f64)> {
    let sol = solve_policy(gamma, &dgp.cells, &dgp.probabilities, class)?;
    let value = population_regret_from(dgp, gamma, &sol.policy);
    Ok((sol.policy, value))
}

/// Utility re-indexed to the cell order of a sample.
fn utility_for(dgp: &SyntheticDgp, table: &CovariateTable) -> Result<UtilitySpec> {
    if !dgp.utility.is_per_cell() {
        return Ok(dgp.utility.clone());
    }
    let levels = dgp.grid.len();
    let mut benefit = Vec::new();
    let mut cost = Vec::new();
    for cell in table.cells() {
        let c = dgp
            .cells
            .iter()
            .position(|x| x == &cell.covariates)
            .ok_or_else(|| Error::InvalidInput("sample cell absent from the design".into()))?;
        benefit.push((0..levels).map(|j| dgp.utility.benefit(c, j)).collect());
        cost.push((0..levels).map(|j| dgp.utility.cost(c, j)).collect());
    }
    UtilitySpec::per_cell(benefit, cost)
}

/// Full pipeline on one sample: estimate, project, worst-case regret, policy.
pub fn fit_policy(
    dgp: &SyntheticDgp,
    cs: &ConstraintSystem,
    data: Vec<Observation>,
    estimator: &EstimatorSpec,
    class: &PolicyClassSpec,
    criterion: Criterion,
) -> Result<Policy> {
    let table = CovariateTable::new(data, &dgp.grid)?;
    let raw = estimate(&table, &dgp.grid, estimator)?;
    let projected = project_feasible(&raw, cs)?;
    let u = utility_for(dgp, &table)?;
    let opts = RegretOptions {
        criterion,
        ..RegretOptions::default()
    };
    let gamma = regret_matrix(cs, &projected.estimate, &u, &opts)?;
    let cells: Vec<Vec<f64>> = table.cells().iter().map(|c| c.covariates.clone()).collect();
    Ok(solve_policy(&gamma, &cells, &table.weights(), class)?.policy)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub estimator: EstimatorSpec,
    pub class: PolicyClassSpec,
    pub criterion: Criterion,
    pub seed: u64,
    /// Run replications on the current rayon pool; results do not depend on it.
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sample_sizes: vec![400, 1600, 6400],
            replications: 200,
            estimator: EstimatorSpec::default(),
            class: PolicyClassSpec::default(),
            criterion: Criterion::MinimaxRegret,
            seed: 0,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapRecord {
    pub n: usize,
    pub replication: usize,
    pub policy: Policy,
    pub regret: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub optimum: Policy,
    pub optimal_regret: f64,
    pub records: Vec<GapRecord>,
}

impl ExperimentResult {
    /// `(N, mean gap)` in the order of the configured sample sizes.
    pub fn mean_gaps(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64, usize)> = Vec::new();
        for r in &self.records {
            match out.iter_mut().find(|(n, _, _)| *n == r.n) {
                Some(e) => {
                    e.1 += r.gap;
                    e.2 += 1;
                }
                None => out.push((r.n, r.gap, 1)),
            }
        }
        out.into_iter().map(|(n, s, k)| (n, s / k as f64)).collect()
    }
}

/// Generator for replication `index`: the experiment seed with its own stream.
pub fn replication_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Regret gap `R(pi_hat) - R(pi*)` for every sample size and replication.
pub fn convergence_experiment(
    dgp: &SyntheticDgp,
    config: &ExperimentConfig,
) -> Result<ExperimentResult> {
    if config.replications == 0 || config.sample_sizes.is_empty() {
        return Err(Error::InvalidInput(
            "need at least one sample size and one replication".into(),
        ));
    }
    dgp.validate()?;
    let cs = dgp.constraints()?;
    let gamma = population_gamma(dgp, &cs, config.criterion)?;
    let (optimum, optimal_regret) = population_optimum(dgp, &gamma, &config.class)?;

    let jobs: Vec<(usize, usize)> = config
        .sample_sizes
        .iter()
        .flat_map(|&n| (0..config.replications).map(move |r| (n, r)))
        .collect();
    let run = |(idx, &(n, replication)): (usize, &(usize, usize))| -> Result<GapRecord> {
        let mut rng = replication_rng(config.seed, idx as u64);
        let data = dgp.sample(n, &mut rng)?;
        let policy = fit_policy(
            dgp,
            &cs,
            data,
            &config.estimator,
            &config.class,
            config.criterion,
        )?;
        let regret = population_regret_from(dgp, &gamma, &policy);
        Ok(GapRecord {
            n,
            replication,
            policy,
            regret,
            gap: regret - optimal_regret,
        })
    };
    let records = if config.parallel {
        jobs.par_iter()
            .enumerate()
            .map(run)
            .collect::<Result<Vec<_>>>()?
    } else {
        jobs.iter()
            .enumerate()
            .map(run)
            .collect::<Result<Vec<_>>>()?
    };
    Ok(ExperimentResult {
        optimum,
        optimal_regret,
        records,
    })
}

/// Least-squares slope of `log(mean gap)` on `log N`; `None` if any mean gap
/// is not positive.
pub fn log_log_slope(points: &[(usize, f64)]) -> Option<f64> {
    if points.len() < 2 || points.iter().any(|&(_, g)| !(g > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|&(n, _)| (n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, g)| g.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyKind;

    #[test]
    fn default_design_is_valid() {
        SyntheticDgp::default_design().validate().unwrap();
    }

    #[test]
    fn rejects_shape_violating_truth() {
        let mut dgp = SyntheticDgp::default_design();
        dgp.m_true[0][1] = 0.99;
        assert!(dgp.validate().is_err());
    }

    #[test]
    fn sampling_is_reproducible() {
        let dgp = SyntheticDgp::default_design();
        let a = dgp.sample(50, &mut replication_rng(7, 3)).unwrap();
        let b = dgp.sample(50, &mut replication_rng(7, 3)).unwrap();
        let c = dgp.sample(50, &mut replication_rng(7, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|o| o.treatment == 0.0 || o.treatment == 2.0));
    }

    #[test]
    fn point_identified_first_best_has_zero_regret() {
        let mut dgp = SyntheticDgp::default_design();
        dgp.grid = dgp.grid.fully_observed();
        dgp.treatment_probabilities = vec![0.2; 5];
        let cs = dgp.constraints().unwrap();
        let gamma = population_gamma(&dgp, &cs, Criterion::MinimaxRegret).unwrap();
        for c in 0..dgp.cells.len() {
            let best = (0..dgp.grid.len())
                .max_by(|&a, &b| {
                    (dgp.grid.value(a) * dgp.m_true[c][a])
                        .total_cmp(&(dgp.grid.value(b) * dgp.m_true[c][b]))
                })
                .unwrap();
            assert!(gamma.get(c, best).abs() < 1e-9);
        }
    }

    #[test]
    fn slope_of_exact_power_law() {
        let pts: Vec<(usize, f64)> = [100usize, 400, 1600]
            .iter()
            .map(|&n| (n, 3.0 / (n as f64).sqrt()))
            .collect();
        assert!((log_log_slope(&pts).unwrap() + 0.5).abs() < 1e-12);
        assert!(log_log_slope(&[(1, 0.0), (2, 1.0)]).is_none());
    }

    #[test]
    fn small_experiment_gaps_are_nonnegative() {
        let dgp = SyntheticDgp::default_design();
        for kind in [PolicyKind::Constant, PolicyKind::LinearScore] {
            let class = PolicyClassSpec {
                kind,
                features: vec![0],
                ..PolicyClassSpec::default()
            };
            let config = ExperimentConfig {
                sample_sizes: vec![200],
                replications: 5,
                class,
                seed: 11,
                ..ExperimentConfig::default()
            };
            let res = convergence_experiment(&dgp, &config).unwrap();
            assert!(res.records.iter().all(|r| r.gap >= -1e-9));
        }
    }
}
