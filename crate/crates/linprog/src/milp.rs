use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::simplex::{solve_lp_with, SimplexOptions};
use crate::{LinearProgram, LpError, LpSolution, LpStatus, Sense};

/// A linear program in which the listed variables must take values in `{0, 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedProgram {
    pub lp: LinearProgram,
    pub binaries: Vec<usize>,
}

impl MixedProgram {
    pub fn new(lp: LinearProgram, binaries: Vec<usize>) -> Self {
        Self { lp, binaries }
    }

    pub fn validate(&self) -> Result<(), LpError> {
        self.lp.validate()?;
        let n = self.lp.num_vars();
        if let Some(&b) = self.binaries.iter().find(|&&b| b >= n) {
            return Err(LpError::InvalidProblem(format!(
                "binary index {b} out of range for {n} variables"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MilpOptions {
    pub node_limit: usize,
    pub int_tol: f64,
    pub simplex: SimplexOptions,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self {
            node_limit: 1_000_000,
            int_tol: 1e-6,
            simplex: SimplexOptions::default(),
        }
    }
}

struct Node {
    /// Parent relaxation value in maximization form.
    bound: f64,
    depth: usize,
    seq: usize,
    /// Per-binary fixing: `None` keeps `[0, 1]`.
    fixed: Vec<Option<bool>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Best bound first, deeper nodes on ties, then latest pushed.
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then(self.depth.cmp(&other.depth))
            .then(self.seq.cmp(&other.seq))
    }
}

/// Branch-and-bound over the binary variables of `mp`.
///
/// Nodes are explored best-bound first; the branching variable is the most
/// fractional binary (lowest index on ties). Integral relaxations are
/// re-solved with every binary pinned so the returned continuous part is
/// consistent with the rounded binaries.
pub fn solve_milp(mp: &MixedProgram, opts: &MilpOptions) -> Result<LpSolution, LpError> {
    mp.validate()?;
    let sign = match mp.lp.sense {
        Sense::Maximize => 1.0,
        Sense::Minimize => -1.0,
    };
    let mut base = mp.lp.clone();
    for &b in &mp.binaries {
        let lo = base.lower[b].max(0.0);
        let hi = base.upper[b].min(1.0);
        if lo > hi {
            return Ok(LpSolution::non_optimal(LpStatus::Infeasible, &mp.lp, 0));
        }
        base.lower[b] = lo.ceil();
        base.upper[b] = hi.floor();
        if base.lower[b] > base.upper[b] {
            return Ok(LpSolution::non_optimal(LpStatus::Infeasible, &mp.lp, 0));
        }
    }

    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    heap.push(Node {
        bound: f64::INFINITY,
        depth: 0,
        seq,
        fixed: vec![None; mp.binaries.len()],
    });
    let mut incumbent: Option<(f64, LpSolution)> = None;
    let mut nodes = 0;
    let mut iterations = 0;

    let pruned = |bound: f64, incumbent: &Option<(f64, LpSolution)>| match incumbent {
        Some((best, _)) => bound <= best + 1e-9 * (1.0 + best.abs()),
        None => false,
    };

    while let Some(node) = heap.pop() {
        if pruned(node.bound, &incumbent) {
            continue;
        }
        nodes += 1;
        if nodes > opts.node_limit {
            return Err(LpError::NodeLimitExceeded {
                limit: opts.node_limit,
            });
        }
        let lp = with_fixings(&base, &mp.binaries, &node.fixed);
        let sol = solve_lp_with(&lp, &opts.simplex)?;
        iterations += sol.iterations;
        match sol.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                let mut out = LpSolution::non_optimal(LpStatus::Unbounded, &mp.lp, iterations);
                out.nodes = nodes;
                return Ok(out);
            }
            LpStatus::Optimal => {}
        }
        let value = sign * sol.objective;
        if pruned(value, &incumbent) {
            continue;
        }

        let most_fractional = |threshold: f64| {
            mp.binaries
                .iter()
                .enumerate()
                .filter(|&(k, _)| node.fixed[k].is_none())
                .map(|(k, &b)| (k, (sol.x[b] - sol.x[b].round()).abs()))
                .filter(|&(_, frac)| frac > threshold)
                .fold(None, |best: Option<(usize, f64)>, cur| match best {
                    Some(b) if b.1 >= cur.1 => Some(b),
                    _ => Some(cur),
                })
                .map(|(k, _)| k)
        };

        let mut branch = most_fractional(opts.int_tol);
        if branch.is_none() {
            let fixed: Vec<Option<bool>> =
                mp.binaries.iter().map(|&b| Some(sol.x[b] > 0.5)).collect();
            let pinned = with_fixings(&base, &mp.binaries, &fixed);
            let mut exact = solve_lp_with(&pinned, &opts.simplex)?;
            iterations += exact.iterations;
            if exact.status == LpStatus::Optimal {
                for &b in &mp.binaries {
                    exact.x[b] = exact.x[b].round();
                }
                let v = sign * exact.objective;
                if incumbent.as_ref().is_none_or(|(best, _)| v > *best) {
                    incumbent = Some((v, exact));
                }
                continue;
            }
            // Rounding within the tolerance broke feasibility; keep branching.
            branch = most_fractional(0.0);
        }
        if let Some(k) = branch {
            let up_first = sol.x[mp.binaries[k]] >= 0.5;
            for up in [!up_first, up_first] {
                let mut fixed = node.fixed.clone();
                fixed[k] = Some(up);
                seq += 1;
                heap.push(Node {
                    bound: value,
                    depth: node.depth + 1,
                    seq,
                    fixed,
                });
            }
        }
    }

    match incumbent {
        Some((_, mut sol)) => {
            sol.nodes = nodes;
            sol.iterations = iterations;
            Ok(sol)
        }
        None => {
            let mut out = LpSolution::non_optimal(LpStatus::Infeasible, &mp.lp, iterations);
            out.nodes = nodes;
            Ok(out)
        }
    }
}

fn with_fixings(base: &LinearProgram, binaries: &[usize], fixed: &[Option<bool>]) -> LinearProgram {
    let mut lp = base.clone();
    for (&b, f) in binaries.iter().zip(fixed) {
        if let Some(up) = *f {
            let v = if up { 1.0 } else { 0.0 };
            lp.lower[b] = v;
            lp.upper[b] = v;
        }
    }
    lp
}
