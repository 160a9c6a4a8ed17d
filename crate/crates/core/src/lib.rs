//! Minimax-regret treatment assignment when the policy may use treatment
//! levels that never appear in the experimental data.
//!
//! The pipeline is:
//!
//! 1. [`firststage`] estimates mean responses at the observed levels and
//!    repairs estimates that no shape-consistent response curve can extend.
//! 2. [`shape`] turns declarative restrictions (monotone, convex, bounds,
//!    Lipschitz) into a polyhedron `S m <= r` over the full treatment grid.
//! 3. [`regret`] computes, per covariate cell and treatment, the worst-case
//!    regret over every response curve consistent with the data and shape.
//! 4. [`policy`] minimizes the averaged worst-case regret over constant or
//!    linear-eligibility-score policies.
//!
//! [`simlab`] validates the pipeline against synthetic designs with a known
//! population response.

pub mod domain;
mod error;
pub mod firststage;
pub mod policy;
pub mod regret;
pub mod shape;
pub mod simlab;

pub use domain::{
    assign, Cell, CovariateTable, DualCertificate, Observation, Policy, RegretMatrix,
    ResponseEstimate, TreatmentGrid, UtilitySpec,
};
pub use error::{Error, Result};
pub use shape::{build_constraints, ConstraintSystem, Curvature, Monotone, ShapeSpec};
