use shapemmr::Error;
use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Solver(String),
    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::Infeasible(_) => 3,
            Self::Solver(_) => 4,
            Self::Output(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InfeasibleShapeSet
            | Error::InfeasibleIdentifiedSet { .. }
            | Error::MilpInfeasible => Self::Infeasible(msg),
            Error::Solver(_) | Error::NoConvergence(_) => Self::Solver(msg),
            _ => Self::Validation(msg),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
