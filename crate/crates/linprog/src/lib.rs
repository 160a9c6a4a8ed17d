//! Small dense linear-programming engine.
//!
//! [`solve_lp`] runs a two-phase primal simplex on a dense tableau (Dantzig
//! pricing with a Bland's-rule fallback) and recovers shadow prices for every
//! constraint block. [`solve_milp`] adds best-bound branch-and-bound over a
//! set of binary variables.
//!
//! The problems this crate is built for have at most a few hundred columns,
//! so no sparse factorization or warm starting is attempted.

mod error;
pub mod linalg;
mod milp;
mod problem;
mod simplex;

pub use error::LpError;
pub use milp::{solve_milp, MilpOptions, MixedProgram};
pub use problem::{LinearProgram, LpSolution, LpStatus, Sense};
pub use simplex::{solve_lp, solve_lp_with, SimplexOptions};
