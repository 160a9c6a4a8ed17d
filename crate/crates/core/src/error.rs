use shapemmr_linprog::LpError;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid treatment grid: {0}")]
    InvalidGrid(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(
        "shape specification has no restrictions and no bounds; new treatments are unidentified"
    )]
    EmptySpec,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("logistic first stage requires outcomes in {{0, 1}}, found {0}")]
    NonBinaryOutcome(f64),
    #[error("first-stage fit did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("no response vector satisfies the shape restrictions")]
    InfeasibleShapeSet,
    #[error("shape restrictions do not bound the response; add bounds")]
    UnboundedShapeSet,
    #[error("empirical identified set is empty at cell {cell}")]
    InfeasibleIdentifiedSet { cell: usize },
    #[error(
        "worst-case regret is unbounded at cell {cell}; add bounds to the shape specification"
    )]
    UnboundedRegret { cell: usize },
    #[error("policy program is infeasible; widen the cutoff box")]
    MilpInfeasible,
    #[error(transparent)]
    Solver(#[from] LpError),
}
