//! Minimizing averaged worst-case regret over a policy class.

use serde::{Deserialize, Serialize};
use shapemmr_linprog::{solve_milp, LinearProgram, LpStatus, MilpOptions, MixedProgram};

use crate::{Error, Policy, RegretMatrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    #[default]
    Constant,
    LinearScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyClassSpec {
    #[serde(default)]
    pub kind: PolicyKind,
    /// Covariate columns entering the eligibility score; the first one gets
    /// the normalized weight.
    #[serde(default)]
    pub features: Vec<usize>,
    /// Require the first weight to be positive (fixed to 1 after rescaling).
    /// When false both signs are tried.
    #[serde(default = "default_true")]
    pub positive_first_weight: bool,
    /// Cutoff box on the rescaled score; defaults to `[-K, K + 1]` for `K`
    /// score covariates.
    #[serde(default)]
    pub cutoff_box: Option<[f64; 2]>,
    /// Margin enforcing `score > cutoff` strictly in the MILP.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_node_limit")]
    pub node_limit: usize,
}

fn default_true() -> bool {
    true
}
fn default_epsilon() -> f64 {
    1e-6
}
fn default_node_limit() -> usize {
    1_000_000
}

impl Default for PolicyClassSpec {
    fn default() -> Self {
        Self {
            kind: PolicyKind::Constant,
            features: Vec::new(),
            positive_first_weight: true,
            cutoff_box: None,
            epsilon: default_epsilon(),
            node_limit: default_node_limit(),
        }
    }
}

impl PolicyClassSpec {
    pub fn linear_score(features: Vec<usize>) -> Self {
        Self {
            kind: PolicyKind::LinearScore,
            features,
            ..Self::default()
        }
    }

    pub fn validate(&self, covariate_dim: usize) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidInput("epsilon must be positive".into()));
        }
        if let Some([lo, hi]) = self.cutoff_box {
            if !(lo < hi) {
                return Err(Error::InvalidInput("cutoff box needs lo < hi".into()));
            }
        }
        if self.kind == PolicyKind::LinearScore {
            if self.features.is_empty() {
                return Err(Error::InvalidInput(
                    "linear score needs at least one feature".into(),
                ));
            }
            if let Some(&f) = self.features.iter().find(|&&f| f >= covariate_dim) {
                return Err(Error::InvalidInput(format!(
                    "score feature {f} out of range for {covariate_dim} covariates"
                )));
            }
        }
        Ok(())
    }
}

/// A solved policy with its per-cell assignment and sample objective.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySolution {
    pub policy: Policy,
    pub assignment: Vec<usize>,
    pub objective: f64,
    /// Branch-and-bound nodes explored (zero for enumeration).
    pub nodes: usize,
}

fn check_weights(rm: &RegretMatrix, weights: &[f64]) -> Result<()> {
    if rm.cells() != weights.len() || rm.cells() == 0 {
        return Err(Error::InvalidInput(format!(
            "{} regret rows but {} weights",
            rm.cells(),
            weights.len()
        )));
    }
    Ok(())
}

/// Best single level for everyone; ties go to the lowest level.
pub fn solve_constant(rm: &RegretMatrix, weights: &[f64]) -> Result<PolicySolution> {
    check_weights(rm, weights)?;
    let mut best = (0, f64::INFINITY);
    for j in 0..rm.levels() {
        let obj: f64 = weights
            .iter()
            .enumerate()
            .map(|(c, w)| w * rm.get(c, j))
            .sum();
        if obj < best.1 - 1e-12 {
            best = (j, obj);
        }
    }
    Ok(PolicySolution {
        policy: Policy::Constant(best.0),
        assignment: vec![best.0; rm.cells()],
        objective: best.1,
        nodes: 0,
    })
}

/// Affine map of each score column onto `[0, 1]` over the cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Rescaling {
    pub lower: Vec<f64>,
    pub range: Vec<f64>,
}

impl Rescaling {
    fn fit(cells: &[Vec<f64>], features: &[usize]) -> Self {
        let mut lower = Vec::with_capacity(features.len());
        let mut range = Vec::with_capacity(features.len());
        for &f in features {
            let (lo, hi) = cells
                .iter()
                .map(|x| x[f])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
                    (l.min(v), h.max(v))
                });
            lower.push(lo);
            range.push(hi - lo);
        }
        Self { lower, range }
    }

    fn apply(&self, x: &[f64], features: &[usize]) -> Vec<f64> {
        features
            .iter()
            .enumerate()
            .map(|(k, &f)| {
                if self.range[k] > 0.0 {
                    (x[f] - self.lower[k]) / self.range[k]
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Linear eligibility-score policy minimizing averaged worst-case regret.
///
/// Score covariates are rescaled to `[0, 1]`, the first weight is fixed to
/// `+1` (or `-1`), the others are boxed to `[-1, 1]`. With binaries `g_ij`
/// meaning "score of cell `i` exceeds cutoff `j`", the indicator is linearized
/// as `s_i - c_j <= M g_ij` and `s_i - c_j >= eps - M (1 - g_ij)`, and cell
/// `i` receives level `sum_j g_ij`. The returned policy is expressed in the
/// original covariate units with cutoffs centred between neighbouring scores.
pub fn solve_linear_score(
    rm: &RegretMatrix,
    cells: &[Vec<f64>],
    weights: &[f64],
    spec: &PolicyClassSpec,
) -> Result<PolicySolution> {
    check_weights(rm, weights)?;
    if cells.len() != rm.cells() {
        return Err(Error::InvalidInput(
            "one covariate vector per regret row is required".into(),
        ));
    }
    spec.validate(cells[0].len())?;
    let signs: &[f64] = if spec.positive_first_weight {
        &[1.0]
    } else {
        &[1.0, -1.0]
    };
    let mut best: Option<PolicySolution> = None;
    let mut nodes = 0;
    for &sign in signs {
        match solve_signed(rm, cells, weights, spec, sign) {
            Ok(sol) => {
                nodes += sol.nodes;
                if best
                    .as_ref()
                    .is_none_or(|b| sol.objective < b.objective - 1e-12)
                {
                    best = Some(sol);
                }
            }
            Err(Error::MilpInfeasible) => {}
            Err(e) => return Err(e),
        }
    }
    let mut best = best.ok_or(Error::MilpInfeasible)?;
    best.nodes = nodes;
    Ok(best)
}

fn solve_signed(
    rm: &RegretMatrix,
    cells: &[Vec<f64>],
    weights: &[f64],
    spec: &PolicyClassSpec,
    sign: f64,
) -> Result<PolicySolution> {
    let features = &spec.features;
    let dims = features.len();
    let levels = rm.levels();
    let ncut = levels - 1;
    let n = cells.len();
    let scaling = Rescaling::fit(cells, features);
    let z: Vec<Vec<f64>> = cells.iter().map(|x| scaling.apply(x, features)).collect();

    // Score s_i = sign * z_i0 + sum_{k>0} beta_k z_ik lies in [s_lo, s_hi].
    let free = (dims - 1) as f64;
    let (s_lo, s_hi) = if sign > 0.0 {
        (-free, 1.0 + free)
    } else {
        (-1.0 - free, free)
    };
    let [c_lo, c_hi] = spec
        .cutoff_box
        .unwrap_or([-(dims as f64), dims as f64 + 1.0]);
    let big_m = (s_hi - c_lo).max(c_hi - s_lo) + 1.0;
    let eps = spec.epsilon;

    // Variables: beta_1..beta_{K-1}, c_1..c_{J-1}, g_{i,j}.
    let nb = dims - 1;
    let beta_var = |k: usize| k - 1;
    let cut_var = |j: usize| nb + j;
    let g_var = |i: usize, j: usize| nb + ncut + i * ncut + j;
    let nvars = nb + ncut + n * ncut;

    let mut objective = vec![0.0; nvars];
    let mut constant = 0.0;
    for i in 0..n {
        constant += weights[i] * rm.get(i, 0);
        for j in 0..ncut {
            objective[g_var(i, j)] = weights[i] * (rm.get(i, j + 1) - rm.get(i, j));
        }
    }
    let mut lp = LinearProgram::minimize(objective);
    for k in 1..dims {
        lp.set_bounds(beta_var(k), -1.0, 1.0);
    }
    for j in 0..ncut {
        lp.set_bounds(cut_var(j), c_lo, c_hi);
    }
    for i in 0..n {
        for j in 0..ncut {
            lp.set_bounds(g_var(i, j), 0.0, 1.0);
        }
    }
    for j in 0..ncut.saturating_sub(1) {
        let mut row = vec![0.0; nvars];
        row[cut_var(j)] = 1.0;
        row[cut_var(j + 1)] = -1.0;
        lp.add_le(row, 0.0);
    }
    for i in 0..n {
        let fixed = sign * z[i][0];
        for j in 0..ncut {
            // s_i - c_j - M g_ij <= 0
            let mut row = vec![0.0; nvars];
            for k in 1..dims {
                row[beta_var(k)] = z[i][k];
            }
            row[cut_var(j)] = -1.0;
            row[g_var(i, j)] = -big_m;
            lp.add_le(row, -fixed);
            // -s_i + c_j + M g_ij <= M - eps
            let mut row = vec![0.0; nvars];
            for k in 1..dims {
                row[beta_var(k)] = -z[i][k];
            }
            row[cut_var(j)] = 1.0;
            row[g_var(i, j)] = big_m;
            lp.add_le(row, big_m - eps + fixed);
            // Cutoffs are ordered, so exceeding c_{j+1} implies exceeding c_j.
            if j + 1 < ncut {
                let mut row = vec![0.0; nvars];
                row[g_var(i, j + 1)] = 1.0;
                row[g_var(i, j)] = -1.0;
                lp.add_le(row, 0.0);
            }
        }
    }
    // With a single score covariate the ordering of cells is known.
    if dims == 1 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| (sign * z[a][0]).total_cmp(&(sign * z[b][0])));
        for w in order.windows(2) {
            let (a, b) = (w[0], w[1]);
            let tie = sign * z[a][0] >= sign * z[b][0] - eps;
            for j in 0..ncut {
                let mut row = vec![0.0; nvars];
                row[g_var(a, j)] = 1.0;
                row[g_var(b, j)] = -1.0;
                if tie {
                    lp.add_eq(row, 0.0);
                } else {
                    lp.add_le(row, 0.0);
                }
            }
        }
    }

    let binaries: Vec<usize> = (0..n)
        .flat_map(|i| (0..ncut).map(move |j| g_var(i, j)))
        .collect();
    let opts = MilpOptions {
        node_limit: spec.node_limit,
        ..MilpOptions::default()
    };
    let sol = solve_milp(&MixedProgram::new(lp, binaries), &opts)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(Error::MilpInfeasible),
        LpStatus::Unbounded => unreachable!("all policy variables are boxed"),
    }

    let mut beta = vec![sign];
    beta.extend((1..dims).map(|k| sol.x[beta_var(k)]));
    let scores: Vec<f64> = z
        .iter()
        .map(|zi| zi.iter().zip(&beta).map(|(a, b)| a * b).sum())
        .collect();
    let above: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..ncut).map(|j| sol.x[g_var(i, j)] > 0.5).collect())
        .collect();
    let assignment: Vec<usize> = above
        .iter()
        .map(|g| g.iter().filter(|&&v| v).count())
        .collect();

    // Centre each cutoff in the gap separating the cells below from those above.
    let mut cutoffs = Vec::with_capacity(ncut);
    for j in 0..ncut {
        let below = (0..n)
            .filter(|&i| !above[i][j])
            .map(|i| scores[i])
            .fold(f64::NEG_INFINITY, f64::max);
        let over = (0..n)
            .filter(|&i| above[i][j])
            .map(|i| scores[i])
            .fold(f64::INFINITY, f64::min);
        let c = match (below.is_finite(), over.is_finite()) {
            (true, true) => 0.5 * (below + over),
            (true, false) => below + 1.0,
            (false, true) => over - 1.0,
            (false, false) => sol.x[cut_var(j)],
        };
        cutoffs.push(c);
    }
    for j in 1..ncut {
        cutoffs[j] = cutoffs[j].max(cutoffs[j - 1]);
    }

    // Back to original units: s = sum_k beta_k (x_k - lo_k) / range_k.
    let mut beta_orig = Vec::with_capacity(dims);
    let mut shift = 0.0;
    for k in 0..dims {
        if scaling.range[k] > 0.0 {
            let b = beta[k] / scaling.range[k];
            beta_orig.push(b);
            shift += b * scaling.lower[k];
        } else {
            beta_orig.push(0.0);
        }
    }
    let cutoffs_orig: Vec<f64> = cutoffs.iter().map(|c| c + shift).collect();
    let policy = Policy::linear_score(features.clone(), beta_orig, cutoffs_orig)?;
    let objective = rm.objective(weights, &assignment);
    debug_assert!((objective - (constant + sol.objective)).abs() <= 1e-6 * (1.0 + objective.abs()));
    Ok(PolicySolution {
        policy,
        assignment,
        objective,
        nodes: sol.nodes,
    })
}

/// Dispatches on the class kind.
pub fn solve_policy(
    rm: &RegretMatrix,
    cells: &[Vec<f64>],
    weights: &[f64],
    spec: &PolicyClassSpec,
) -> Result<PolicySolution> {
    match spec.kind {
        PolicyKind::Constant => solve_constant(rm, weights),
        PolicyKind::LinearScore => solve_linear_score(rm, cells, weights, spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{assign, TreatmentGrid};
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_picks_smallest_weighted_regret() {
        let rm = RegretMatrix::from_gamma(vec![vec![0.5, 0.0, 0.5]]);
        let sol = solve_constant(&rm, &[1.0]).unwrap();
        assert_eq!(sol.policy, Policy::Constant(1));
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn constant_ties_go_low() {
        let rm = RegretMatrix::from_gamma(vec![vec![0.2, 0.2, 0.2], vec![0.1, 0.1, 0.1]]);
        assert_eq!(
            solve_constant(&rm, &[0.5, 0.5]).unwrap().policy,
            Policy::Constant(0)
        );
    }

    #[test]
    fn split_between_two_cells() {
        // Low-score cell wants level 0, high-score cell wants level 2.
        let rm = RegretMatrix::from_gamma(vec![vec![0.0, 0.3, 0.9], vec![0.8, 0.4, 0.0]]);
        let cells = vec![vec![1.0], vec![3.0]];
        let sol = solve_linear_score(
            &rm,
            &cells,
            &[0.5, 0.5],
            &PolicyClassSpec::linear_score(vec![0]),
        )
        .unwrap();
        assert_eq!(sol.assignment, vec![0, 2]);
        assert_abs_diff_eq!(sol.objective, 0.0, epsilon = 1e-12);
        let g = TreatmentGrid::new(vec![0.0, 1.0, 2.0], &[0.0]).unwrap();
        for (x, &a) in cells.iter().zip(&sol.assignment) {
            assert_eq!(assign(&sol.policy, x, &g), a);
            assert_eq!(assign(&sol.policy.scaled(2.0), x, &g), a);
        }
    }

    #[test]
    fn constant_optimal_instance_matches_constant_solver() {
        let rm = RegretMatrix::from_gamma(vec![
            vec![0.4, 0.1, 0.3],
            vec![0.5, 0.0, 0.2],
            vec![0.6, 0.05, 0.1],
        ]);
        let cells = vec![vec![0.0, 1.0], vec![0.5, 0.2], vec![1.0, 0.7]];
        let w = [0.2, 0.3, 0.5];
        let ls = solve_linear_score(&rm, &cells, &w, &PolicyClassSpec::linear_score(vec![0, 1]))
            .unwrap();
        let c = solve_constant(&rm, &w).unwrap();
        assert_abs_diff_eq!(ls.objective, c.objective, epsilon = 1e-12);
        assert_eq!(ls.assignment, vec![1, 1, 1]);
    }

    #[test]
    fn reversed_order_needs_negative_weight() {
        let rm = RegretMatrix::from_gamma(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        // Cell with larger x wants the lower level.
        let cells = vec![vec![2.0], vec![1.0]];
        let w = [0.5, 0.5];
        let pos =
            solve_linear_score(&rm, &cells, &w, &PolicyClassSpec::linear_score(vec![0])).unwrap();
        assert_abs_diff_eq!(pos.objective, 0.5, epsilon = 1e-12);
        let spec = PolicyClassSpec {
            positive_first_weight: false,
            ..PolicyClassSpec::linear_score(vec![0])
        };
        let free = solve_linear_score(&rm, &cells, &w, &spec).unwrap();
        assert_abs_diff_eq!(free.objective, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn tight_cutoff_box_is_infeasible() {
        let rm = RegretMatrix::from_gamma(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let cells = vec![vec![0.0], vec![1.0]];
        let spec = PolicyClassSpec {
            cutoff_box: Some([5.0, 6.0]),
            ..PolicyClassSpec::linear_score(vec![0])
        };
        // Cutoffs above every score are feasible: everyone gets level 0.
        let sol = solve_linear_score(&rm, &cells, &[0.5, 0.5], &spec).unwrap();
        assert_eq!(sol.assignment, vec![0, 0]);
        let spec = PolicyClassSpec {
            epsilon: 0.0,
            ..spec
        };
        assert!(solve_linear_score(&rm, &cells, &[0.5, 0.5], &spec).is_err());
    }
}
