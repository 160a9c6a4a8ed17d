//! Worst-case regret over the empirical identified set.
//!
//! For one covariate cell the identified set is the polyhedron
//! `{ m : S m <= r, F m = m0 }`. The regret from assigning level `j` when
//! `k` was better is linear in `m`, so every worst case is an LP.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use shapemmr_linprog::{solve_lp, LinearProgram, LpSolution, LpStatus};

use crate::domain::DualCertificate;
use crate::{ConstraintSystem, Error, RegretMatrix, ResponseEstimate, Result, UtilitySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Benchmark against the best level under the same response curve.
    #[default]
    MinimaxRegret,
    /// Benchmark against zero, i.e. maximize the worst-case welfare.
    MaximinWelfare,
}

/// How `max_k gamma_jk` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMethod {
    /// One stacked dual LP per `(cell, j)`.
    #[default]
    Dual,
    /// `J` primal LPs per `(cell, j)`.
    Primal,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RegretOptions {
    pub criterion: Criterion,
    pub method: GammaMethod,
    /// Also record every pairwise `gamma_jk` (minimax regret only).
    pub detail: bool,
    /// Record the worst-case certificate for each `(cell, j)`.
    pub certificates: bool,
    /// Spread cells over the current rayon pool.
    pub parallel: bool,
}

/// Pointwise bounds over the identified set at one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub m_min: Vec<f64>,
    pub m_max: Vec<f64>,
    pub v_min: Vec<f64>,
    pub v_max: Vec<f64>,
}

fn identified_set_lp(cs: &ConstraintSystem, m0: &[f64], objective: Vec<f64>) -> LinearProgram {
    let mut lp = LinearProgram::maximize(objective);
    lp.a_ub = cs.s.clone();
    lp.b_ub = cs.r.clone();
    lp.a_eq = cs.f.clone();
    lp.b_eq = m0.to_vec();
    lp
}

fn check_len(cs: &ConstraintSystem, m0: &[f64]) -> Result<()> {
    if m0.len() != cs.observed().len() {
        return Err(Error::InvalidInput(format!(
            "estimate has {} entries but {} levels are observed",
            m0.len(),
            cs.observed().len()
        )));
    }
    Ok(())
}

fn solve_cell(lp: &LinearProgram, cell: usize) -> Result<LpSolution> {
    let sol = solve_lp(lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol),
        LpStatus::Infeasible => Err(Error::InfeasibleIdentifiedSet { cell }),
        LpStatus::Unbounded => Err(Error::UnboundedRegret { cell }),
    }
}

/// Returns some member of the identified set at `cell`, or
/// `InfeasibleIdentifiedSet` when it is empty.
pub fn identified_witness(cell: usize, cs: &ConstraintSystem, m0: &[f64]) -> Result<Vec<f64>> {
    check_len(cs, m0)?;
    let lp = identified_set_lp(cs, m0, vec![0.0; cs.levels()]);
    match solve_lp(&lp)?.status {
        LpStatus::Infeasible => Err(Error::InfeasibleIdentifiedSet { cell }),
        _ => Ok(solve_cell(&lp, cell)?.x),
    }
}

/// Objective vector and constant of `v_m(d_k) - v_m(d_j)`.
fn pair_objective(
    cell: usize,
    j: usize,
    k: usize,
    levels: usize,
    u: &UtilitySpec,
) -> (Vec<f64>, f64) {
    let mut b = vec![0.0; levels];
    if j == k {
        return (b, 0.0);
    }
    b[k] += u.benefit(cell, k);
    b[j] -= u.benefit(cell, j);
    (b, u.cost(cell, k) - u.cost(cell, j))
}

/// `max_m v_m(d_k) - v_m(d_j)` over the identified set, with a maximizer.
pub fn gamma_jk(
    cell: usize,
    j: usize,
    k: usize,
    cs: &ConstraintSystem,
    est: &ResponseEstimate,
    u: &UtilitySpec,
) -> Result<(f64, Vec<f64>)> {
    let m0 = est.cell(cell);
    check_len(cs, m0)?;
    let (b, c) = pair_objective(cell, j, k, cs.levels(), u);
    let sol = solve_cell(&identified_set_lp(cs, m0, b), cell)?;
    Ok((sol.objective - c, sol.x))
}

/// `max_k gamma_jk` by solving every pairwise LP; ties go to the smallest `k`.
/// Returns the value, the maximizing `k`, its response curve and all pairwise values.
pub fn gamma_j_primal(
    cell: usize,
    j: usize,
    cs: &ConstraintSystem,
    est: &ResponseEstimate,
    u: &UtilitySpec,
) -> Result<(f64, usize, Vec<f64>, Vec<f64>)> {
    let mut values = Vec::with_capacity(cs.levels());
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    for k in 0..cs.levels() {
        let (v, m) = gamma_jk(cell, j, k, cs, est, u)?;
        values.push(v);
        if best.as_ref().is_none_or(|(bv, _, _)| v > bv + 1e-12) {
            best = Some((v, k, m));
        }
    }
    let (v, k, m) = best.expect("grid has at least two levels");
    Ok((v, k, m, values))
}

/// `max_k gamma_jk` as one LP over stacked dual multipliers:
///
/// `min mu  s.t.  r'lambda_k + m0'eta_k - mu <= c_jk,
///  S'lambda_k + F'eta_k = b_jk,  lambda_k >= 0`  for every `k`.
///
/// The worst-case curve is recovered from the primal LP of the binding `k`
/// (the smallest `k` whose row carries a nonzero multiplier).
pub fn gamma_j(
    cell: usize,
    j: usize,
    cs: &ConstraintSystem,
    est: &ResponseEstimate,
    u: &UtilitySpec,
) -> Result<DualCertificate> {
    let m0 = est.cell(cell);
    check_len(cs, m0)?;
    // Empty identified set makes the dual unbounded below; report it as such.
    identified_witness(cell, cs, m0)?;

    let levels = cs.levels();
    let rows = cs.rows();
    let obs = m0.len();
    let block = rows + obs;
    let nvars = 1 + levels * block;
    let mut objective = vec![0.0; nvars];
    objective[0] = 1.0;
    let mut lp = LinearProgram::minimize(objective);
    for k in 0..levels {
        let base = 1 + k * block;
        for i in 0..rows {
            lp.set_bounds(base + i, 0.0, f64::INFINITY);
        }
        let (b, c) = pair_objective(cell, j, k, levels, u);
        let mut row = vec![0.0; nvars];
        row[0] = -1.0;
        row[base..base + rows].copy_from_slice(&cs.r);
        row[base + rows..base + block].copy_from_slice(m0);
        lp.add_le(row, c);
        for (l, &bl) in b.iter().enumerate() {
            let mut row = vec![0.0; nvars];
            for i in 0..rows {
                row[base + i] = cs.s[i][l];
            }
            for (p, f) in cs.f.iter().enumerate() {
                row[base + rows + p] = f[l];
            }
            lp.add_eq(row, bl);
        }
    }
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        // A pairwise primal is unbounded, so its dual block is infeasible.
        LpStatus::Infeasible => return Err(Error::UnboundedRegret { cell }),
        LpStatus::Unbounded => return Err(Error::InfeasibleIdentifiedSet { cell }),
    }
    let mu = sol.objective;
    let tol = 1e-8 * (1.0 + mu.abs());

    let weights: Vec<f64> = sol.ineq_duals.iter().map(|v| v.abs()).collect();
    let mut candidates: Vec<usize> = (0..levels).filter(|&k| weights[k] > 1e-9).collect();
    candidates.extend((0..levels).filter(|&k| weights[k] <= 1e-9));
    for k in candidates {
        let (value, m_star) = gamma_jk(cell, j, k, cs, est, u)?;
        if (value - mu).abs() <= tol {
            let base = 1 + k * block;
            return Ok(DualCertificate {
                k,
                value: mu,
                lambda: sol.x[base..base + rows].to_vec(),
                eta: sol.x[base + rows..base + block].to_vec(),
                m_star,
            });
        }
    }
    Err(Error::Solver(shapemmr_linprog::LpError::NumericalFailure {
        iterations: sol.iterations,
    }))
}

/// `max_m -v_m(d_j)` over the identified set: the maximin-welfare analogue
/// of `gamma_j`.
pub fn welfare_shortfall(
    cell: usize,
    j: usize,
    cs: &ConstraintSystem,
    est: &ResponseEstimate,
    u: &UtilitySpec,
) -> Result<(f64, Vec<f64>)> {
    let m0 = est.cell(cell);
    check_len(cs, m0)?;
    let mut b = vec![0.0; cs.levels()];
    b[j] = -u.benefit(cell, j);
    let sol = solve_cell(&identified_set_lp(cs, m0, b), cell)?;
    Ok((sol.objective + u.cost(cell, j), sol.x))
}

/// Worst-case regret (or welfare shortfall) for every cell of `est` and
/// every grid level.
pub fn regret_matrix(
    cs: &ConstraintSystem,
    est: &ResponseEstimate,
    u: &UtilitySpec,
    opts: &RegretOptions,
) -> Result<RegretMatrix> {
    let per_cell = |cell: usize| -> Result<CellRegret> { cell_regret(cell, cs, est, u, opts) };
    let cells: Vec<CellRegret> = if opts.parallel {
        (0..est.cells())
            .into_par_iter()
            .map(per_cell)
            .collect::<Result<_>>()?
    } else {
        (0..est.cells()).map(per_cell).collect::<Result<_>>()?
    };
    let mut gamma = Vec::with_capacity(cells.len());
    let mut detail = Vec::with_capacity(cells.len());
    let mut certificates = Vec::with_capacity(cells.len());
    for c in cells {
        gamma.push(c.gamma);
        detail.push(c.detail);
        certificates.push(c.certificates);
    }
    Ok(RegretMatrix {
        gamma,
        detail: (opts.detail && opts.criterion == Criterion::MinimaxRegret).then_some(detail),
        certificates: opts.certificates.then_some(certificates),
    })
}

struct CellRegret {
    gamma: Vec<f64>,
    detail: Vec<Vec<f64>>,
    certificates: Vec<DualCertificate>,
}

fn cell_regret(
    cell: usize,
    cs: &ConstraintSystem,
    est: &ResponseEstimate,
    u: &UtilitySpec,
    opts: &RegretOptions,
) -> Result<CellRegret> {
    identified_witness(cell, cs, est.cell(cell))?;
    let levels = cs.levels();
    let mut out = CellRegret {
        gamma: Vec::new(),
        detail: Vec::new(),
        certificates: Vec::new(),
    };
    for j in 0..levels {
        match opts.criterion {
            Criterion::MaximinWelfare => {
                let (v, m) = welfare_shortfall(cell, j, cs, est, u)?;
                out.gamma.push(v);
                if opts.certificates {
                    out.certificates.push(DualCertificate {
                        k: j,
                        value: v,
                        lambda: Vec::new(),
                        eta: Vec::new(),
                        m_star: m,
                    });
                }
            }
            Criterion::MinimaxRegret if opts.detail || opts.method == GammaMethod::Primal => {
                let (v, k, m, values) = gamma_j_primal(cell, j, cs, est, u)?;
                out.gamma.push(v);
                out.detail.push(values);
                if opts.certificates {
                    out.certificates.push(DualCertificate {
                        k,
                        value: v,
                        lambda: Vec::new(),
                        eta: Vec::new(),
                        m_star: m,
                    });
                }
            }
            Criterion::MinimaxRegret => {
                let cert = gamma_j(cell, j, cs, est, u)?;
                out.gamma.push(cert.value);
                if opts.certificates {
                    out.certificates.push(cert);
                }
            }
        }
    }
    Ok(out)
}

/// Per-level minimum and maximum of `m(d)` over the identified set, with the
/// implied utility range.
pub fn envelopes(
    cell: usize,
    cs: &ConstraintSystem,
    est: &ResponseEstimate,
    u: &UtilitySpec,
) -> Result<Envelope> {
    let m0 = est.cell(cell);
    check_len(cs, m0)?;
    let levels = cs.levels();
    let mut env = Envelope {
        m_min: Vec::with_capacity(levels),
        m_max: Vec::with_capacity(levels),
        v_min: Vec::with_capacity(levels),
        v_max: Vec::with_capacity(levels),
    };
    for l in 0..levels {
        let mut e = vec![0.0; levels];
        e[l] = 1.0;
        let hi = solve_cell(&identified_set_lp(cs, m0, e.clone()), cell)?.objective;
        e[l] = -1.0;
        let lo = -solve_cell(&identified_set_lp(cs, m0, e), cell)?.objective;
        let (a, b) = (u.value(cell, l, lo), u.value(cell, l, hi));
        env.m_min.push(lo);
        env.m_max.push(hi);
        env.v_min.push(a.min(b));
        env.v_max.push(a.max(b));
    }
    Ok(env)
}
