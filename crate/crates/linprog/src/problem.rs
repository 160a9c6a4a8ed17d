use crate::LpError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

/// `opt c'z  s.t.  A_ub z <= b_ub,  A_eq z = b_eq,  lower <= z <= upper`.
///
/// Constraint rows are stored densely. Variables default to free bounds;
/// use [`LinearProgram::set_bounds`] or [`LinearProgram::nonnegative`] to
/// restrict them.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            sense,
            objective,
            a_ub: Vec::new(),
            b_ub: Vec::new(),
            a_eq: Vec::new(),
            b_eq: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn maximize(objective: Vec<f64>) -> Self {
        Self::new(Sense::Maximize, objective)
    }

    pub fn minimize(objective: Vec<f64>) -> Self {
        Self::new(Sense::Minimize, objective)
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    /// Adds `row . z <= rhs`.
    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.a_ub.push(row);
        self.b_ub.push(rhs);
        self
    }

    /// Adds `row . z >= rhs`, stored as `-row . z <= -rhs`.
    pub fn add_ge(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.a_ub.push(row.into_iter().map(|v| -v).collect());
        self.b_ub.push(-rhs);
        self
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.a_eq.push(row);
        self.b_eq.push(rhs);
        self
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) -> &mut Self {
        self.lower[var] = lower;
        self.upper[var] = upper;
        self
    }

    /// Restricts every variable to `[0, +inf)`.
    pub fn nonnegative(mut self) -> Self {
        self.lower.iter_mut().for_each(|l| *l = 0.0);
        self
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        let bad = |msg: String| Err(LpError::InvalidProblem(msg));
        if self.a_ub.len() != self.b_ub.len() {
            return bad(format!(
                "{} inequality rows but {} right-hand sides",
                self.a_ub.len(),
                self.b_ub.len()
            ));
        }
        if self.a_eq.len() != self.b_eq.len() {
            return bad(format!(
                "{} equality rows but {} right-hand sides",
                self.a_eq.len(),
                self.b_eq.len()
            ));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return bad("bound vectors do not match the number of variables".into());
        }
        for (i, row) in self.a_ub.iter().chain(self.a_eq.iter()).enumerate() {
            if row.len() != n {
                return bad(format!("row {i} has {} entries, expected {n}", row.len()));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return bad(format!("row {i} has a non-finite coefficient"));
            }
        }
        if self
            .objective
            .iter()
            .chain(&self.b_ub)
            .chain(&self.b_eq)
            .any(|v| !v.is_finite())
        {
            return bad("objective and right-hand sides must be finite".into());
        }
        for j in 0..n {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo.is_nan()
                || hi.is_nan()
                || lo > hi
                || lo == f64::INFINITY
                || hi == f64::NEG_INFINITY
            {
                return bad(format!("variable {j} has invalid bounds [{lo}, {hi}]"));
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, z: &[f64]) -> f64 {
        dot(&self.objective, z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Result of a solve.
///
/// Dual values are shadow prices `d objective / d rhs` in the problem's own
/// sense: for a maximization, multipliers on `<=` rows are nonnegative; for
/// a minimization they are nonpositive. `reduced_costs` is
/// `c - A_ub' ineq_duals - A_eq' eq_duals`, the net multiplier on the
/// variable bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub ineq_duals: Vec<f64>,
    pub eq_duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
    /// Branch-and-bound nodes explored; zero for plain LP solves.
    pub nodes: usize,
}

impl LpSolution {
    pub(crate) fn non_optimal(status: LpStatus, lp: &LinearProgram, iterations: usize) -> Self {
        let objective = match (status, lp.sense) {
            (LpStatus::Unbounded, Sense::Maximize) => f64::INFINITY,
            (LpStatus::Unbounded, Sense::Minimize) => f64::NEG_INFINITY,
            _ => f64::NAN,
        };
        Self {
            status,
            x: Vec::new(),
            objective,
            ineq_duals: Vec::new(),
            eq_duals: Vec::new(),
            reduced_costs: Vec::new(),
            iterations,
            nodes: 0,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Largest violation of any row or bound by `x`.
    pub fn primal_residual(&self, lp: &LinearProgram) -> f64 {
        let mut worst = 0.0_f64;
        for (row, b) in lp.a_ub.iter().zip(&lp.b_ub) {
            worst = worst.max(dot(row, &self.x) - b);
        }
        for (row, b) in lp.a_eq.iter().zip(&lp.b_eq) {
            worst = worst.max((dot(row, &self.x) - b).abs());
        }
        for (j, &xj) in self.x.iter().enumerate() {
            worst = worst.max(lp.lower[j] - xj).max(xj - lp.upper[j]);
        }
        worst
    }

    /// Objective of the Lagrangian dual evaluated at the returned
    /// multipliers. Returns an infinite value when a reduced cost points at
    /// an infinite bound (the multipliers are then not dual feasible).
    pub fn dual_objective(&self, lp: &LinearProgram) -> f64 {
        let mut value = dot(&lp.b_ub, &self.ineq_duals) + dot(&lp.b_eq, &self.eq_duals);
        for (j, &r) in self.reduced_costs.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            let bound = bound_for_reduced_cost(lp, j, r);
            if !bound.is_finite() {
                return match lp.sense {
                    Sense::Maximize => f64::INFINITY,
                    Sense::Minimize => f64::NEG_INFINITY,
                };
            }
            value += r * bound;
        }
        value
    }

    /// Largest `|multiplier * slack|` over rows and bounds, plus any sign
    /// violation of the inequality multipliers.
    pub fn complementary_slackness_residual(&self, lp: &LinearProgram) -> f64 {
        let sign = match lp.sense {
            Sense::Maximize => 1.0,
            Sense::Minimize => -1.0,
        };
        let mut worst = 0.0_f64;
        for ((row, b), &lam) in lp.a_ub.iter().zip(&lp.b_ub).zip(&self.ineq_duals) {
            let slack = b - dot(row, &self.x);
            worst = worst.max((lam * slack).abs()).max(-sign * lam);
        }
        for (j, &r) in self.reduced_costs.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            let bound = bound_for_reduced_cost(lp, j, r);
            let gap = if bound.is_finite() {
                (self.x[j] - bound).abs()
            } else {
                f64::INFINITY
            };
            worst = worst.max(r.abs() * gap);
        }
        worst
    }
}

fn bound_for_reduced_cost(lp: &LinearProgram, j: usize, r: f64) -> f64 {
    let at_upper = match lp.sense {
        Sense::Maximize => r > 0.0,
        Sense::Minimize => r < 0.0,
    };
    if at_upper {
        lp.upper[j]
    } else {
        lp.lower[j]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
