use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("invalid linear program: {0}")]
    InvalidProblem(String),
    #[error("simplex failed to converge after {iterations} iterations")]
    NumericalFailure { iterations: usize },
    #[error("branch-and-bound exceeded the node limit of {limit}")]
    NodeLimitExceeded { limit: usize },
}
