//! First-stage estimation of mean responses at the observed levels, and
//! repair of estimates that admit no shape-consistent extension.

use serde::{Deserialize, Serialize};
use shapemmr_linprog::linalg::Lu;
use shapemmr_linprog::{solve_lp, LinearProgram, LpStatus};

use crate::regret::identified_witness;
use crate::{ConstraintSystem, CovariateTable, Error, ResponseEstimate, Result, TreatmentGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Within-cell sample means.
    #[default]
    CellMeans,
    /// Per-level logistic regression on all monomials of degree <= 2.
    LogisticPoly2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    #[serde(default)]
    pub kind: EstimatorKind,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_ridge() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    100
}
fn default_tol() -> f64 {
    1e-9
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        Self {
            kind: EstimatorKind::CellMeans,
            ridge: default_ridge(),
            max_iter: default_max_iter(),
            tol: default_tol(),
        }
    }
}

impl EstimatorSpec {
    pub fn logistic() -> Self {
        Self {
            kind: EstimatorKind::LogisticPoly2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0) {
            return Err(Error::InvalidInput("ridge must be nonnegative".into()));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidInput("need tol > 0 and max_iter >= 1".into()));
        }
        Ok(())
    }
}

/// Estimates `m0(d, x)` at every observed level for every cell of `data`.
pub fn estimate(
    data: &CovariateTable,
    grid: &TreatmentGrid,
    spec: &EstimatorSpec,
) -> Result<ResponseEstimate> {
    spec.validate()?;
    let observed = grid.observed_indices();
    let mut per_level = vec![0usize; observed.len()];
    for row in data.rows() {
        per_level[grid
            .observed_position(row.treatment)
            .expect("validated by the table")] += 1;
    }
    if let Some(k) = per_level.iter().position(|&n| n == 0) {
        return Err(Error::InsufficientData(format!(
            "no observations at level {}",
            grid.value(observed[k])
        )));
    }
    match spec.kind {
        EstimatorKind::CellMeans => cell_means(data, grid),
        EstimatorKind::LogisticPoly2 => logistic_poly2(data, grid, spec),
    }
}

fn cell_means(data: &CovariateTable, grid: &TreatmentGrid) -> Result<ResponseEstimate> {
    let obs = grid.observed_len();
    let mut sums = vec![vec![0.0; obs]; data.cells().len()];
    let mut counts = vec![vec![0usize; obs]; data.cells().len()];
    for (i, row) in data.rows().iter().enumerate() {
        let c = data.cell_of_row(i);
        let k = grid
            .observed_position(row.treatment)
            .expect("validated by the table");
        sums[c][k] += row.outcome;
        counts[c][k] += 1;
    }
    let mut values = Vec::with_capacity(sums.len());
    for (c, (s, n)) in sums.into_iter().zip(counts).enumerate() {
        let mut v = Vec::with_capacity(obs);
        for (k, (sk, nk)) in s.into_iter().zip(n).enumerate() {
            if nk == 0 {
                return Err(Error::InsufficientData(format!(
                    "cell {c} has no observations at level {}",
                    grid.value(grid.observed_indices()[k])
                )));
            }
            v.push(sk / nk as f64);
        }
        values.push(v);
    }
    Ok(ResponseEstimate::new(values))
}

/// `1, x_1..x_p, x_1^2..x_p^2, x_a x_b (a < b)`.
pub fn poly2_features(x: &[f64]) -> Vec<f64> {
    let p = x.len();
    let mut out = Vec::with_capacity(1 + 2 * p + p * (p.saturating_sub(1)) / 2);
    out.push(1.0);
    out.extend_from_slice(x);
    out.extend(x.iter().map(|v| v * v));
    for a in 0..p {
        for b in a + 1..p {
            out.push(x[a] * x[b]);
        }
    }
    out
}

fn logistic_poly2(
    data: &CovariateTable,
    grid: &TreatmentGrid,
    spec: &EstimatorSpec,
) -> Result<ResponseEstimate> {
    if let Some(row) = data
        .rows()
        .iter()
        .find(|r| r.outcome != 0.0 && r.outcome != 1.0)
    {
        return Err(Error::NonBinaryOutcome(row.outcome));
    }
    let obs = grid.observed_len();
    let cells: Vec<Vec<f64>> = data
        .cells()
        .iter()
        .map(|c| poly2_features(&c.covariates))
        .collect();
    let mut values = vec![vec![0.0; obs]; cells.len()];
    for k in 0..obs {
        let mut design = Vec::new();
        let mut y = Vec::new();
        for row in data.rows() {
            if grid.observed_position(row.treatment) == Some(k) {
                design.push(poly2_features(&row.covariates));
                y.push(row.outcome);
            }
        }
        let fit = fit_logistic(&design, &y, spec)?;
        for (c, phi) in cells.iter().enumerate() {
            values[c][k] = sigmoid(dot(phi, &fit.coef));
        }
    }
    Ok(ResponseEstimate::new(values))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub coef: Vec<f64>,
    pub iterations: usize,
    /// Max-norm of the penalized score at `coef`.
    pub gradient_norm: f64,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Score of the ridge-penalized log-likelihood
/// `sum_i [y_i t_i - log(1 + e^t_i)] - ridge/2 |coef_{1..}|^2`; the
/// intercept (first column) is not penalized.
pub fn logistic_score(design: &[Vec<f64>], y: &[f64], coef: &[f64], ridge: f64) -> Vec<f64> {
    let mut g: Vec<f64> = coef
        .iter()
        .enumerate()
        .map(|(a, c)| if a == 0 { 0.0 } else { -ridge * c })
        .collect();
    for (phi, &yi) in design.iter().zip(y) {
        let resid = yi - sigmoid(dot(phi, coef));
        for (ga, pa) in g.iter_mut().zip(phi) {
            *ga += resid * pa;
        }
    }
    g
}

/// Newton-Raphson (IRLS) for the ridge-penalized logistic regression. Stops
/// once the max-norm of the penalized score is at most `spec.tol`.
pub fn fit_logistic(design: &[Vec<f64>], y: &[f64], spec: &EstimatorSpec) -> Result<LogisticFit> {
    let p = design.first().map_or(0, Vec::len);
    let mut coef = vec![0.0; p];
    for it in 0..spec.max_iter {
        let grad = logistic_score(design, y, &coef, spec.ridge);
        let gnorm = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        if gnorm <= spec.tol {
            return Ok(LogisticFit {
                coef,
                iterations: it,
                gradient_norm: gnorm,
            });
        }
        let mut hess = vec![vec![0.0; p]; p];
        for phi in design {
            let pr = sigmoid(dot(phi, &coef));
            let w = pr * (1.0 - pr);
            if w == 0.0 {
                continue;
            }
            for a in 0..p {
                let wa = w * phi[a];
                for b in a..p {
                    hess[a][b] += wa * phi[b];
                }
            }
        }
        for a in 0..p {
            if a > 0 {
                hess[a][a] += spec.ridge;
            }
            for b in 0..a {
                hess[a][b] = hess[b][a];
            }
        }
        // Tiny jitter keeps an unpenalized degenerate intercept solvable.
        let scale = hess
            .iter()
            .enumerate()
            .map(|(a, r)| r[a])
            .fold(0.0_f64, f64::max)
            .max(1.0);
        for (a, row) in hess.iter_mut().enumerate() {
            row[a] += 1e-14 * scale;
        }
        let lu = Lu::factor(&hess).ok_or(Error::NoConvergence(it))?;
        let step = lu.solve(&grad);

        // Backtrack on the penalized log-likelihood.
        let base = penalized_loglik(design, y, &coef, spec.ridge);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = coef.iter().zip(&step).map(|(c, s)| c + t * s).collect();
            if penalized_loglik(design, y, &trial, spec.ridge) >= base - 1e-12 * base.abs()
                || t < 1e-8
            {
                coef = trial;
                break;
            }
            t *= 0.5;
        }
    }
    let grad = logistic_score(design, y, &coef, spec.ridge);
    let gnorm = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
    if gnorm <= spec.tol {
        Ok(LogisticFit {
            coef,
            iterations: spec.max_iter,
            gradient_norm: gnorm,
        })
    } else {
        Err(Error::NoConvergence(spec.max_iter))
    }
}

fn penalized_loglik(design: &[Vec<f64>], y: &[f64], coef: &[f64], ridge: f64) -> f64 {
    let mut ll = -0.5 * ridge * coef.iter().skip(1).map(|c| c * c).sum::<f64>();
    for (phi, &yi) in design.iter().zip(y) {
        let t = dot(phi, coef);
        // log(1 + e^t) computed stably.
        let softplus = if t > 0.0 {
            t + (-t).exp().ln_1p()
        } else {
            t.exp().ln_1p()
        };
        ll += yi * t - softplus;
    }
    ll
}

/// Outcome of [`project_feasible`].
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub estimate: ResponseEstimate,
    /// A full response vector per cell that satisfies the shape restrictions
    /// and reproduces the returned estimate on the observed levels.
    pub witnesses: Vec<Vec<f64>>,
    pub changed: Vec<bool>,
    /// Final conditional-gradient gap per cell (zero when unchanged).
    pub gaps: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionOptions {
    pub gap_tol: f64,
    pub max_iter: usize,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-14,
            max_iter: 10_000,
        }
    }
}

pub fn project_feasible(est: &ResponseEstimate, cs: &ConstraintSystem) -> Result<Projection> {
    project_feasible_with(est, cs, &ProjectionOptions::default())
}

/// Replaces each cell's estimate by the nearest point (Euclidean, on the
/// observed levels) that some shape-feasible full response vector extends.
///
/// Cells whose estimate is already extendable are returned unchanged. The
/// rest are projected onto `F {m : S m <= r}` by pairwise conditional
/// gradient with exact line search, using the LP solver as the linear
/// minimization oracle, then polished on the final active face.
pub fn project_feasible_with(
    est: &ResponseEstimate,
    cs: &ConstraintSystem,
    opts: &ProjectionOptions,
) -> Result<Projection> {
    let shape_lp = |direction: &[f64]| -> Result<Vec<f64>> {
        // minimize direction . (F m)
        let mut c = vec![0.0; cs.levels()];
        for (&j, d) in cs.observed().iter().zip(direction) {
            c[j] = *d;
        }
        let mut lp = LinearProgram::minimize(c);
        lp.a_ub = cs.s.clone();
        lp.b_ub = cs.r.clone();
        let sol = solve_lp(&lp)?;
        match sol.status {
            LpStatus::Optimal => Ok(sol.x),
            LpStatus::Infeasible => Err(Error::InfeasibleShapeSet),
            LpStatus::Unbounded => Err(Error::UnboundedShapeSet),
        }
    };
    // Nonempty shape set check up front.
    shape_lp(&vec![0.0; cs.observed().len()])?;

    let mut out = Projection {
        estimate: est.clone(),
        witnesses: Vec::with_capacity(est.cells()),
        changed: vec![false; est.cells()],
        gaps: vec![0.0; est.cells()],
    };
    for c in 0..est.cells() {
        let target = est.cell(c);
        match identified_witness(c, cs, target) {
            Ok(m) => {
                out.witnesses.push(m);
                continue;
            }
            Err(Error::InfeasibleIdentifiedSet { .. }) => {}
            Err(e) => return Err(e),
        }
        let (m, gap) = pairwise_projection(target, cs, &shape_lp, opts)?;
        out.estimate.values[c] = cs.select(&m);
        out.witnesses.push(m);
        out.changed[c] = true;
        out.gaps[c] = gap;
    }
    Ok(out)
}

struct Atom {
    y: Vec<f64>,
    m: Vec<f64>,
    weight: f64,
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn pairwise_projection(
    target: &[f64],
    cs: &ConstraintSystem,
    lmo: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    opts: &ProjectionOptions,
) -> Result<(Vec<f64>, f64)> {
    let start = lmo(&target.iter().map(|v| -v).collect::<Vec<_>>())?;
    let mut atoms = vec![Atom {
        y: cs.select(&start),
        m: start,
        weight: 1.0,
    }];
    let current = |atoms: &[Atom]| -> Vec<f64> {
        let mut y = vec![0.0; target.len()];
        for a in atoms {
            for (yi, ai) in y.iter_mut().zip(&a.y) {
                *yi += a.weight * ai;
            }
        }
        y
    };
    let mut gap = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let y = current(&atoms);
        let grad = sub(&y, target);
        let s_m = lmo(&grad)?;
        let s_y = cs.select(&s_m);
        gap = dot(&grad, &sub(&y, &s_y));
        if gap <= opts.gap_tol {
            break;
        }
        let (away, _) = atoms
            .iter()
            .enumerate()
            .map(|(i, a)| (i, dot(&grad, &a.y)))
            .fold((0, f64::NEG_INFINITY), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            });
        let dir = sub(&s_y, &atoms[away].y);
        let dd = dot(&dir, &dir);
        if dd == 0.0 {
            break;
        }
        let gamma_max = atoms[away].weight;
        let gamma = (-dot(&grad, &dir) / dd).clamp(0.0, gamma_max);
        if gamma == 0.0 {
            break;
        }
        let existing = atoms
            .iter()
            .position(|a| a.y.iter().zip(&s_y).all(|(p, q)| (p - q).abs() <= 1e-13));
        match existing {
            Some(i) => atoms[i].weight += gamma,
            None => atoms.push(Atom {
                y: s_y,
                m: s_m,
                weight: gamma,
            }),
        }
        atoms[away].weight -= gamma;
        if gamma >= gamma_max {
            atoms.remove(away);
        }
        atoms.retain(|a| a.weight > 0.0);
    }
    polish_on_face(&mut atoms, target);
    let mut m = vec![0.0; cs.levels()];
    for a in &atoms {
        for (mi, ai) in m.iter_mut().zip(&a.m) {
            *mi += a.weight * ai;
        }
    }
    Ok((m, gap))
}

/// Exact least-squares weights on the affine hull of the active atoms,
/// accepted only when they stay nonnegative and improve the distance.
fn polish_on_face(atoms: &mut [Atom], target: &[f64]) {
    let n = atoms.len();
    if n < 2 {
        return;
    }
    // KKT of min |sum w_a y_a - t|^2 s.t. sum w_a = 1.
    let mut kkt = vec![vec![0.0; n + 1]; n + 1];
    let mut rhs = vec![0.0; n + 1];
    for a in 0..n {
        for b in 0..n {
            kkt[a][b] = dot(&atoms[a].y, &atoms[b].y);
        }
        kkt[a][n] = 1.0;
        kkt[n][a] = 1.0;
        rhs[a] = dot(&atoms[a].y, target);
    }
    rhs[n] = 1.0;
    let Some(lu) = Lu::factor(&kkt) else {
        return;
    };
    let w = lu.solve(&rhs);
    if w[..n].iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return;
    }
    let dist = |weights: &[f64]| -> f64 {
        let mut y = vec![0.0; target.len()];
        for (a, &wa) in atoms.iter().zip(weights) {
            for (yi, ai) in y.iter_mut().zip(&a.y) {
                *yi += wa * ai;
            }
        }
        let d = sub(&y, target);
        dot(&d, &d)
    };
    let old: Vec<f64> = atoms.iter().map(|a| a.weight).collect();
    if dist(&w[..n]) <= dist(&old) {
        let total: f64 = w[..n].iter().sum();
        for (a, &wa) in atoms.iter_mut().zip(&w[..n]) {
            a.weight = wa / total;
        }
    }
}
