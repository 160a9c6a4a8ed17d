use crate::linalg::Lu;
use crate::problem::dot;
use crate::{LinearProgram, LpError, LpSolution, LpStatus, Sense};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    /// Smallest tableau entry accepted as a pivot.
    pub pivot_tol: f64,
    /// Phase-one infeasibility threshold, scaled by `1 + max |rhs|`.
    pub feas_tol: f64,
    /// Reduced-cost threshold for declaring optimality.
    pub opt_tol: f64,
    /// Switch from Dantzig pricing to Bland's rule after
    /// `bland_factor * (rows + cols)` iterations of a phase.
    pub bland_factor: usize,
    /// Give up after `max_iter_factor * (rows + cols) + 1000` iterations.
    pub max_iter_factor: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            pivot_tol: 1e-10,
            feas_tol: 1e-9,
            opt_tol: 1e-9,
            bland_factor: 5,
            max_iter_factor: 50,
        }
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    solve_lp_with(lp, &SimplexOptions::default())
}

pub fn solve_lp_with(lp: &LinearProgram, opts: &SimplexOptions) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let std = StandardForm::build(lp);
    let mut tab = Tableau::new(&std);
    let mut iterations = 0;

    // Phase one: maximize minus the sum of artificials.
    if tab.num_artificial > 0 {
        let cost: Vec<f64> = (0..tab.ncols)
            .map(|j| if j >= tab.first_artificial { -1.0 } else { 0.0 })
            .collect();
        let allowed = vec![true; tab.ncols];
        match tab.run(&cost, &allowed, opts, &mut iterations)? {
            Phase::Optimal => {}
            Phase::Unbounded => unreachable!("phase one objective is bounded above by zero"),
        }
        let infeasibility: f64 = (0..tab.rows)
            .filter(|&i| tab.basis[i] >= tab.first_artificial)
            .map(|i| tab.rhs(i).max(0.0))
            .sum();
        let scale = 1.0 + std.rhs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if infeasibility > opts.feas_tol * scale {
            return Ok(LpSolution::non_optimal(
                LpStatus::Infeasible,
                lp,
                iterations,
            ));
        }
        tab.drive_out_artificials(opts.pivot_tol);
    }

    let allowed: Vec<bool> = (0..tab.ncols).map(|j| j < tab.first_artificial).collect();
    match tab.run(&std.cost, &allowed, opts, &mut iterations)? {
        Phase::Optimal => {}
        Phase::Unbounded => {
            return Ok(LpSolution::non_optimal(LpStatus::Unbounded, lp, iterations));
        }
    }
    std.recover(lp, &tab, iterations, opts)
}

/// How an original variable maps onto nonnegative standard-form columns.
#[derive(Debug, Clone, Copy)]
enum ColMap {
    /// `z = lo + col`
    Shift {
        col: usize,
        lo: f64,
    },
    /// `z = hi - col`
    Reflect {
        col: usize,
        hi: f64,
    },
    /// `z = pos - neg`
    Split {
        pos: usize,
        neg: usize,
    },
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Origin {
    Ineq(usize),
    Eq(usize),
    Upper,
}

/// `max cost'w  s.t.  rows w = rhs,  w >= 0` with one slack per inequality
/// row and every row scaled so that `rhs >= 0`.
struct StandardForm {
    maps: Vec<ColMap>,
    /// Structural plus slack columns; artificials are appended by the tableau.
    ncols: usize,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    origin: Vec<Origin>,
    /// `-1` where the row was negated to make its rhs nonnegative.
    flip: Vec<f64>,
    /// Column that starts basic in each row, or `None` when an artificial is needed.
    initial_basic: Vec<Option<usize>>,
    cost: Vec<f64>,
}

impl StandardForm {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let mut maps = Vec::with_capacity(n);
        let mut nstruct = 0;
        for j in 0..n {
            let (lo, hi) = (lp.lower[j], lp.upper[j]);
            let map = if lo == hi {
                ColMap::Fixed(lo)
            } else if lo.is_finite() {
                nstruct += 1;
                ColMap::Shift {
                    col: nstruct - 1,
                    lo,
                }
            } else if hi.is_finite() {
                nstruct += 1;
                ColMap::Reflect {
                    col: nstruct - 1,
                    hi,
                }
            } else {
                nstruct += 2;
                ColMap::Split {
                    pos: nstruct - 2,
                    neg: nstruct - 1,
                }
            };
            maps.push(map);
        }

        let translate = |row: &[f64], rhs: f64| -> (Vec<f64>, f64) {
            let mut out = vec![0.0; nstruct];
            let mut b = rhs;
            for (j, &a) in row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                match maps[j] {
                    ColMap::Shift { col, lo } => {
                        out[col] += a;
                        b -= a * lo;
                    }
                    ColMap::Reflect { col, hi } => {
                        out[col] -= a;
                        b -= a * hi;
                    }
                    ColMap::Split { pos, neg } => {
                        out[pos] += a;
                        out[neg] -= a;
                    }
                    ColMap::Fixed(v) => b -= a * v,
                }
            }
            (out, b)
        };

        let mut le_rows: Vec<(Vec<f64>, f64, Origin)> = Vec::new();
        for (i, (row, &b)) in lp.a_ub.iter().zip(&lp.b_ub).enumerate() {
            let (r, b) = translate(row, b);
            le_rows.push((r, b, Origin::Ineq(i)));
        }
        for (j, map) in maps.iter().enumerate() {
            if let ColMap::Shift { col, lo } = *map {
                if lp.upper[j].is_finite() {
                    let mut r = vec![0.0; nstruct];
                    r[col] = 1.0;
                    le_rows.push((r, lp.upper[j] - lo, Origin::Upper));
                }
            }
        }
        let eq_rows: Vec<(Vec<f64>, f64, Origin)> = lp
            .a_eq
            .iter()
            .zip(&lp.b_eq)
            .enumerate()
            .map(|(i, (row, &b))| {
                let (r, b) = translate(row, b);
                (r, b, Origin::Eq(i))
            })
            .collect();

        let nslack = le_rows.len();
        let ncols = nstruct + nslack;
        let m = le_rows.len() + eq_rows.len();
        let mut rows = Vec::with_capacity(m);
        let mut rhs = Vec::with_capacity(m);
        let mut origin = Vec::with_capacity(m);
        let mut flip = Vec::with_capacity(m);
        let mut initial_basic = Vec::with_capacity(m);
        for (k, (r, b, o)) in le_rows.into_iter().enumerate() {
            let mut full = r;
            full.resize(ncols, 0.0);
            full[nstruct + k] = 1.0;
            let s = if b < 0.0 { -1.0 } else { 1.0 };
            if s < 0.0 {
                full.iter_mut().for_each(|v| *v = -*v);
            }
            initial_basic.push(if s > 0.0 { Some(nstruct + k) } else { None });
            rows.push(full);
            rhs.push(s * b);
            origin.push(o);
            flip.push(s);
        }
        for (r, b, o) in eq_rows {
            let mut full = r;
            full.resize(ncols, 0.0);
            let s = if b < 0.0 { -1.0 } else { 1.0 };
            if s < 0.0 {
                full.iter_mut().for_each(|v| *v = -*v);
            }
            initial_basic.push(None);
            rows.push(full);
            rhs.push(s * b);
            origin.push(o);
            flip.push(s);
        }

        let sign = match lp.sense {
            Sense::Maximize => 1.0,
            Sense::Minimize => -1.0,
        };
        let mut cost = vec![0.0; ncols];
        for (j, map) in maps.iter().enumerate() {
            let c = sign * lp.objective[j];
            match *map {
                ColMap::Shift { col, .. } => cost[col] += c,
                ColMap::Reflect { col, .. } => cost[col] -= c,
                ColMap::Split { pos, neg } => {
                    cost[pos] += c;
                    cost[neg] -= c;
                }
                ColMap::Fixed(_) => {}
            }
        }

        Self {
            maps,
            ncols,
            rows,
            rhs,
            origin,
            flip,
            initial_basic,
            cost,
        }
    }

    fn recover(
        &self,
        lp: &LinearProgram,
        tab: &Tableau,
        iterations: usize,
        opts: &SimplexOptions,
    ) -> Result<LpSolution, LpError> {
        let kept: Vec<usize> = (0..self.rows.len()).filter(|&i| !tab.removed[i]).collect();
        debug_assert_eq!(kept.len(), tab.rows);

        // Recompute basic values and row prices from the original data.
        let mut w = vec![0.0; self.ncols];
        let basis_rows: Vec<Vec<f64>> = kept
            .iter()
            .map(|&i| tab.basis.iter().map(|&c| self.rows[i][c]).collect())
            .collect();
        let cost_b: Vec<f64> = tab.basis.iter().map(|&c| self.cost[c]).collect();
        let lu = Lu::factor(&basis_rows).ok_or(LpError::NumericalFailure { iterations })?;
        let b: Vec<f64> = kept.iter().map(|&i| self.rhs[i]).collect();
        for (r, v) in lu.solve(&b).into_iter().enumerate() {
            w[tab.basis[r]] = v;
        }
        let y_kept = lu.solve_transpose(&cost_b);

        let mut y = vec![0.0; self.rows.len()];
        for (r, &i) in kept.iter().enumerate() {
            y[i] = self.flip[i] * y_kept[r];
        }

        let x: Vec<f64> = self
            .maps
            .iter()
            .map(|map| match *map {
                ColMap::Shift { col, lo } => lo + w[col],
                ColMap::Reflect { col, hi } => hi - w[col],
                ColMap::Split { pos, neg } => w[pos] - w[neg],
                ColMap::Fixed(v) => v,
            })
            .collect();

        let sign = match lp.sense {
            Sense::Maximize => 1.0,
            Sense::Minimize => -1.0,
        };
        let mut ineq_duals = vec![0.0; lp.b_ub.len()];
        let mut eq_duals = vec![0.0; lp.b_eq.len()];
        for (i, o) in self.origin.iter().enumerate() {
            match *o {
                Origin::Ineq(k) => ineq_duals[k] = sign * y[i],
                Origin::Eq(k) => eq_duals[k] = sign * y[i],
                Origin::Upper => {}
            }
        }

        let cmax = lp.objective.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let snap = opts.opt_tol * (1.0 + cmax);
        let mut reduced_costs = lp.objective.clone();
        for (row, &lam) in lp.a_ub.iter().zip(&ineq_duals) {
            for (r, a) in reduced_costs.iter_mut().zip(row) {
                *r -= a * lam;
            }
        }
        for (row, &eta) in lp.a_eq.iter().zip(&eq_duals) {
            for (r, a) in reduced_costs.iter_mut().zip(row) {
                *r -= a * eta;
            }
        }
        for (j, r) in reduced_costs.iter_mut().enumerate() {
            let at_upper = (sign * *r) > 0.0;
            let bound = if at_upper { lp.upper[j] } else { lp.lower[j] };
            if r.abs() <= snap && (!bound.is_finite() || (x[j] - bound).abs() > snap) {
                *r = 0.0;
            }
        }

        Ok(LpSolution {
            status: LpStatus::Optimal,
            objective: dot(&lp.objective, &x),
            x,
            ineq_duals,
            eq_duals,
            reduced_costs,
            iterations,
            nodes: 0,
        })
    }
}

enum Phase {
    Optimal,
    Unbounded,
}

struct Tableau {
    rows: usize,
    /// Columns excluding the rhs.
    ncols: usize,
    first_artificial: usize,
    num_artificial: usize,
    /// Row-major, `ncols + 1` entries per row; the last is the rhs.
    data: Vec<f64>,
    basis: Vec<usize>,
    /// Rows of the standard form dropped as redundant after phase one.
    removed: Vec<bool>,
    /// Standard-form row owning each artificial column.
    artificial_row: Vec<usize>,
}

impl Tableau {
    fn new(std: &StandardForm) -> Self {
        let m = std.rows.len();
        let num_artificial = std.initial_basic.iter().filter(|b| b.is_none()).count();
        let ncols = std.ncols + num_artificial;
        let width = ncols + 1;
        let mut data = vec![0.0; m * width];
        let mut basis = Vec::with_capacity(m);
        let mut artificial_row = Vec::with_capacity(num_artificial);
        let mut next_art = std.ncols;
        for i in 0..m {
            data[i * width..i * width + std.ncols].copy_from_slice(&std.rows[i]);
            data[i * width + ncols] = std.rhs[i];
            match std.initial_basic[i] {
                Some(c) => basis.push(c),
                None => {
                    data[i * width + next_art] = 1.0;
                    basis.push(next_art);
                    artificial_row.push(i);
                    next_art += 1;
                }
            }
        }
        Self {
            rows: m,
            ncols,
            first_artificial: std.ncols,
            num_artificial,
            data,
            basis,
            removed: vec![false; m],
            artificial_row,
        }
    }

    fn width(&self) -> usize {
        self.ncols + 1
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width() + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.ncols)
    }

    fn pivot(&mut self, r: usize, e: usize, reduced: &mut [f64]) {
        let w = self.width();
        let p = self.data[r * w + e];
        for v in &mut self.data[r * w..(r + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.data[r * w..(r + 1) * w].to_vec();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.data[i * w + e];
            if f != 0.0 {
                for (v, pr) in self.data[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                self.data[i * w + e] = 0.0;
            }
        }
        let f = reduced[e];
        if f != 0.0 {
            for (v, pr) in reduced.iter_mut().zip(&pivot_row[..self.ncols]) {
                *v -= f * pr;
            }
            reduced[e] = 0.0;
        }
        self.basis[r] = e;
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for (j, dj) in d.iter_mut().enumerate() {
                    *dj -= cb * self.at(i, j);
                }
            }
        }
        d
    }

    fn run(
        &mut self,
        cost: &[f64],
        allowed: &[bool],
        opts: &SimplexOptions,
        total: &mut usize,
    ) -> Result<Phase, LpError> {
        let mut d = self.reduced_costs(cost);
        let size = self.rows + self.ncols;
        let bland_after = opts.bland_factor * size;
        let max_iter = opts.max_iter_factor * size + 1000;
        let mut iter = 0;
        loop {
            let bland = iter >= bland_after;
            let entering = if bland {
                (0..self.ncols).find(|&j| allowed[j] && d[j] > opts.opt_tol)
            } else {
                (0..self.ncols)
                    .filter(|&j| allowed[j] && d[j] > opts.opt_tol)
                    .max_by(|&a, &b| d[a].total_cmp(&d[b]).then(b.cmp(&a)))
            };
            let Some(e) = entering else {
                return Ok(Phase::Optimal);
            };

            let mut leave: Option<(usize, f64, f64)> = None;
            for i in 0..self.rows {
                let a = self.at(i, e);
                if a <= opts.pivot_tol {
                    continue;
                }
                let ratio = self.rhs(i).max(0.0) / a;
                leave = match leave {
                    None => Some((i, ratio, a)),
                    Some((bi, br, ba)) => {
                        let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                        let better = if tie {
                            if bland {
                                self.basis[i] < self.basis[bi]
                            } else {
                                a > ba
                            }
                        } else {
                            ratio < br
                        };
                        if better {
                            Some((i, ratio, a))
                        } else {
                            Some((bi, br, ba))
                        }
                    }
                };
            }
            let Some((r, _, _)) = leave else {
                return Ok(Phase::Unbounded);
            };
            self.pivot(r, e, &mut d);
            iter += 1;
            *total += 1;
            if iter > max_iter {
                return Err(LpError::NumericalFailure { iterations: *total });
            }
            // Periodically rebuild reduced costs to limit drift.
            if iter % 64 == 0 {
                d = self.reduced_costs(cost);
            }
        }
    }

    /// Pivots basic artificials out of the basis, dropping rows where that is
    /// impossible (linearly dependent equality rows).
    fn drive_out_artificials(&mut self, pivot_tol: f64) {
        let mut dummy = vec![0.0; self.ncols];
        let mut i = 0;
        while i < self.rows {
            if self.basis[i] < self.first_artificial {
                i += 1;
                continue;
            }
            let col = (0..self.first_artificial)
                .filter(|&j| self.at(i, j).abs() > pivot_tol)
                .max_by(|&a, &b| self.at(i, a).abs().total_cmp(&self.at(i, b).abs()));
            match col {
                Some(j) => {
                    self.pivot(i, j, &mut dummy);
                    i += 1;
                }
                None => {
                    // The tableau row combines the original rows with a
                    // nonzero weight on the row owning this artificial, so
                    // that row is the redundant one.
                    let owner = self.artificial_row[self.basis[i] - self.first_artificial];
                    let w = self.width();
                    self.data.drain(i * w..(i + 1) * w);
                    self.basis.remove(i);
                    self.removed[owner] = true;
                    self.rows -= 1;
                }
            }
        }
    }
}
