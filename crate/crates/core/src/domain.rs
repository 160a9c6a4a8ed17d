//! Shared domain types: the treatment grid, utility coefficients, sample
//! data deduplicated into covariate cells, first-stage estimates, the
//! worst-case regret matrix and policies.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Ordered treatment levels `d_1 < ... < d_J` with the subset observed in
/// the experiment marked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentGrid {
    values: Vec<f64>,
    observed: Vec<bool>,
}

impl TreatmentGrid {
    /// `observed_values` must each match an entry of `values` exactly.
    pub fn new(values: Vec<f64>, observed_values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least two levels, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("levels must be finite".into()));
        }
        if let Some(w) = values.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid(format!(
                "levels must be strictly increasing, found {} before {}",
                w[0], w[1]
            )));
        }
        let mut observed = vec![false; values.len()];
        for &d in observed_values {
            match values.iter().position(|&v| v == d) {
                Some(j) => observed[j] = true,
                None => {
                    return Err(Error::InvalidGrid(format!(
                        "observed level {d} is not on the grid"
                    )))
                }
            }
        }
        if !observed.iter().any(|&o| o) {
            return Err(Error::InvalidGrid("no observed levels".into()));
        }
        Ok(Self { values, observed })
    }

    /// Grid `start, start + step, ..., stop` (inclusive, up to rounding).
    pub fn arithmetic(start: f64, step: f64, stop: f64, observed_values: &[f64]) -> Result<Self> {
        if step <= 0.0 || stop < start {
            return Err(Error::InvalidGrid("need step > 0 and stop >= start".into()));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
        let values: Vec<f64> = (0..n).map(|i| start + step * i as f64).collect();
        Self::new(values, observed_values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, j: usize) -> f64 {
        self.values[j]
    }

    pub fn is_observed(&self, j: usize) -> bool {
        self.observed[j]
    }

    pub fn observed_mask(&self) -> &[bool] {
        &self.observed
    }

    /// Grid indices of the observed levels, in increasing order.
    pub fn observed_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.observed[j]).collect()
    }

    pub fn observed_len(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    pub fn index_of(&self, d: f64) -> Option<usize> {
        self.values.iter().position(|&v| v == d)
    }

    /// Position of `d` among the observed levels.
    pub fn observed_position(&self, d: f64) -> Option<usize> {
        let j = self.index_of(d)?;
        self.observed[j].then(|| self.observed[..j].iter().filter(|&&o| o).count())
    }

    /// Same grid with every level observed.
    pub fn fully_observed(&self) -> Self {
        Self {
            values: self.values.clone(),
            observed: vec![true; self.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Coefficients {
    Shared(Vec<f64>),
    PerCell(Vec<Vec<f64>>),
}

impl Coefficients {
    fn get(&self, cell: usize, j: usize) -> f64 {
        match self {
            Self::Shared(v) => v[j],
            Self::PerCell(v) => v[cell][j],
        }
    }

    fn all(&self) -> impl Iterator<Item = &f64> {
        let rows: Vec<&Vec<f64>> = match self {
            Self::Shared(v) => vec![v],
            Self::PerCell(v) => v.iter().collect(),
        };
        rows.into_iter().flatten()
    }

    fn check_len(&self, levels: usize, what: &str) -> Result<()> {
        let ok = match self {
            Self::Shared(v) => v.len() == levels,
            Self::PerCell(v) => v.iter().all(|r| r.len() == levels),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "{what} coefficients must have one entry per level"
            )))
        }
    }
}

/// Utility `u(d, x, y) = b(d, x) y - c(d, x)`, so mean utility under
/// response `m` is `v_m(d, x) = b(d, x) m(d, x) - c(d, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilitySpec {
    benefit: Coefficients,
    cost: Coefficients,
}

impl UtilitySpec {
    /// Same coefficients for every covariate cell.
    pub fn per_level(benefit: Vec<f64>, cost: Vec<f64>) -> Result<Self> {
        if benefit.len() != cost.len() {
            return Err(Error::InvalidInput(
                "benefit and cost lengths differ".into(),
            ));
        }
        Ok(Self {
            benefit: Coefficients::Shared(benefit),
            cost: Coefficients::Shared(cost),
        })
    }

    /// Cell-specific coefficients, indexed `[cell][level]`.
    pub fn per_cell(benefit: Vec<Vec<f64>>, cost: Vec<Vec<f64>>) -> Result<Self> {
        if benefit.len() != cost.len() {
            return Err(Error::InvalidInput(
                "benefit and cost cell counts differ".into(),
            ));
        }
        Ok(Self {
            benefit: Coefficients::PerCell(benefit),
            cost: Coefficients::PerCell(cost),
        })
    }

    /// Price-subsidy utility: a take-up is worth `alpha` and the subsidy
    /// `full_price - d` is paid only on take-up, so `b(d) = alpha - (full_price - d)`
    /// and `c = 0`.
    pub fn subsidy(grid: &TreatmentGrid, alpha: f64, full_price: f64) -> Self {
        let benefit = grid
            .values()
            .iter()
            .map(|&d| alpha - (full_price - d))
            .collect();
        Self {
            benefit: Coefficients::Shared(benefit),
            cost: Coefficients::Shared(vec![0.0; grid.len()]),
        }
    }

    pub fn benefit(&self, cell: usize, j: usize) -> f64 {
        self.benefit.get(cell, j)
    }

    pub fn cost(&self, cell: usize, j: usize) -> f64 {
        self.cost.get(cell, j)
    }

    /// Mean utility of level `j` at `cell` under response value `m`.
    pub fn value(&self, cell: usize, j: usize, m: f64) -> f64 {
        self.benefit(cell, j) * m - self.cost(cell, j)
    }

    /// Checks lengths against the grid and `|b|, |c| <= bound`.
    pub fn validate(&self, grid: &TreatmentGrid, bound: f64) -> Result<()> {
        self.benefit.check_len(grid.len(), "benefit")?;
        self.cost.check_len(grid.len(), "cost")?;
        if let Some(v) = self
            .benefit
            .all()
            .chain(self.cost.all())
            .find(|v| !(v.abs() <= bound))
        {
            return Err(Error::InvalidInput(format!(
                "utility coefficient {v} exceeds the bound {bound}"
            )));
        }
        Ok(())
    }

    pub fn is_per_cell(&self) -> bool {
        matches!(self.benefit, Coefficients::PerCell(_))
    }

    /// Number of cells covered by per-cell coefficients.
    pub fn cell_count(&self) -> Option<usize> {
        match &self.benefit {
            Coefficients::Shared(_) => None,
            Coefficients::PerCell(v) => Some(v.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub treatment: f64,
    pub outcome: f64,
    pub covariates: Vec<f64>,
}

/// A distinct covariate value with its sample share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub covariates: Vec<f64>,
    pub count: usize,
    pub weight: f64,
}

/// Sample rows plus their deduplicated covariate cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    rows: Vec<Observation>,
    cells: Vec<Cell>,
    row_cell: Vec<usize>,
}

impl CovariateTable {
    /// Cells are numbered in order of first appearance. Every treatment must
    /// be an observed level of `grid`.
    pub fn new(rows: Vec<Observation>, grid: &TreatmentGrid) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InsufficientData("no observations".into()));
        }
        let dim = rows[0].covariates.len();
        let mut cells: Vec<Cell> = Vec::new();
        let mut index: std::collections::HashMap<Vec<u64>, usize> = Default::default();
        let mut row_cell = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.covariates.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} covariates, expected {dim}",
                    row.covariates.len()
                )));
            }
            if grid.observed_position(row.treatment).is_none() {
                return Err(Error::InvalidInput(format!(
                    "row {i} has treatment {} which is not an observed grid level",
                    row.treatment
                )));
            }
            if !row.outcome.is_finite() || row.covariates.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "row {i} has a non-finite value"
                )));
            }
            // +0.0 and -0.0 are the same covariate value.
            let key: Vec<u64> = row.covariates.iter().map(|v| (v + 0.0).to_bits()).collect();
            let c = *index.entry(key).or_insert_with(|| {
                cells.push(Cell {
                    covariates: row.covariates.clone(),
                    count: 0,
                    weight: 0.0,
                });
                cells.len() - 1
            });
            cells[c].count += 1;
            row_cell.push(c);
        }
        let n = rows.len() as f64;
        for cell in &mut cells {
            cell.weight = cell.count as f64 / n;
        }
        Ok(Self {
            rows,
            cells,
            row_cell,
        })
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell_of_row(&self, i: usize) -> usize {
        self.row_cell[i]
    }

    pub fn row_cells(&self) -> &[usize] {
        &self.row_cell
    }

    pub fn weights(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.weight).collect()
    }

    pub fn covariate_dim(&self) -> usize {
        self.rows[0].covariates.len()
    }
}

/// First-stage mean responses at the observed levels, indexed `[cell][k]`
/// where `k` runs over observed levels in grid order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseEstimate {
    pub values: Vec<Vec<f64>>,
}

impl ResponseEstimate {
    pub fn new(values: Vec<Vec<f64>>) -> Self {
        Self { values }
    }

    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn cell(&self, c: usize) -> &[f64] {
        &self.values[c]
    }

    pub fn within_bounds(&self, lower: f64, upper: f64) -> bool {
        self.values
            .iter()
            .flatten()
            .all(|&v| (lower..=upper).contains(&v))
    }
}

/// Witness for one worst-case regret value: the maximizing comparison level
/// `k`, the multipliers of its LP dual and the response curve attaining it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    pub k: usize,
    pub value: f64,
    /// Multipliers on `S m <= r` (nonnegative).
    pub lambda: Vec<f64>,
    /// Multipliers on `F m = m0`.
    pub eta: Vec<f64>,
    pub m_star: Vec<f64>,
}

/// Worst-case regret contributions `gamma[cell][j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretMatrix {
    pub gamma: Vec<Vec<f64>>,
    /// Optional pairwise values `detail[cell][j][k]`.
    pub detail: Option<Vec<Vec<Vec<f64>>>>,
    /// Optional certificates `certificates[cell][j]`.
    pub certificates: Option<Vec<Vec<DualCertificate>>>,
}

impl RegretMatrix {
    pub fn from_gamma(gamma: Vec<Vec<f64>>) -> Self {
        Self {
            gamma,
            detail: None,
            certificates: None,
        }
    }

    pub fn cells(&self) -> usize {
        self.gamma.len()
    }

    pub fn levels(&self) -> usize {
        self.gamma.first().map_or(0, Vec::len)
    }

    pub fn get(&self, cell: usize, j: usize) -> f64 {
        self.gamma[cell][j]
    }

    /// `sum_cells weight * gamma[cell][assignment[cell]]`.
    pub fn objective(&self, weights: &[f64], assignment: &[usize]) -> f64 {
        weights
            .iter()
            .zip(assignment)
            .enumerate()
            .map(|(c, (w, &j))| w * self.gamma[c][j])
            .sum()
    }
}

/// Treatment rule mapping covariates to a grid index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Policy {
    Constant(usize),
    /// Score `x[features] . beta`; level `j` (0-based) is assigned when
    /// `cutoffs[j-1] < score <= cutoffs[j]`.
    LinearScore {
        features: Vec<usize>,
        beta: Vec<f64>,
        cutoffs: Vec<f64>,
    },
}

impl Policy {
    pub fn linear_score(features: Vec<usize>, beta: Vec<f64>, cutoffs: Vec<f64>) -> Result<Self> {
        if features.len() != beta.len() || features.is_empty() {
            return Err(Error::InvalidInput(
                "linear score needs one weight per score covariate".into(),
            ));
        }
        if cutoffs.windows(2).any(|w| w[0] > w[1]) || cutoffs.iter().any(|c| c.is_nan()) {
            return Err(Error::InvalidInput(
                "cutoffs must be weakly increasing".into(),
            ));
        }
        Ok(Self::LinearScore {
            features,
            beta,
            cutoffs,
        })
    }

    pub fn score(&self, x: &[f64]) -> Option<f64> {
        match self {
            Self::Constant(_) => None,
            Self::LinearScore { features, beta, .. } => {
                Some(features.iter().zip(beta).map(|(&f, b)| b * x[f]).sum())
            }
        }
    }

    /// Multiplies weights and cutoffs by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Self {
        match self {
            Self::Constant(j) => Self::Constant(*j),
            Self::LinearScore {
                features,
                beta,
                cutoffs,
            } => Self::LinearScore {
                features: features.clone(),
                beta: beta.iter().map(|b| b * lambda).collect(),
                cutoffs: cutoffs.iter().map(|c| c * lambda).collect(),
            },
        }
    }
}

/// Grid index assigned to covariates `x`.
///
/// A score equal to a cutoff goes to the lower level. Cutoffs beyond
/// `J - 1` are ignored and the result is clamped to the grid.
pub fn assign(policy: &Policy, x: &[f64], grid: &TreatmentGrid) -> usize {
    match policy {
        Policy::Constant(j) => (*j).min(grid.len() - 1),
        Policy::LinearScore { cutoffs, .. } => {
            let s = policy.score(x).expect("linear score");
            let above = cutoffs
                .iter()
                .take(grid.len() - 1)
                .filter(|&&c| s > c)
                .count();
            above.min(grid.len() - 1)
        }
    }
}
