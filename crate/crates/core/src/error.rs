use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Why the moment equations have no (detected) solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NonExistence {
    #[error("released degree of node {node} is not positive")]
    DegreeNotPositive { node: usize },
    #[error("released degree of node {node} is at least n - 1")]
    DegreeAtMaximum { node: usize },
    #[error("degree parameters diverged after {iteration} iterations")]
    Diverged { iteration: usize },
    #[error("fixed-point iteration hit its cap")]
    InnerIterationLimit,
    #[error("Newton iteration on gamma hit its cap")]
    OuterIterationLimit,
    #[error("profiled Jacobian is singular")]
    SingularJacobian,
}

/// Errors raised by the library.
///
/// Non-existence of the estimator is *not* an error: it is reported through
/// [`crate::estimator::FitResult::exists`] so that simulation loops can count it.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("node index {index} out of range for n = {n}")]
    NodeOutOfRange { index: usize, n: usize },

    #[error("self pair ({0}, {0}) has no edge variable")]
    SelfPair(usize),

    #[error("dimension mismatch: {what} has length {got}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("invalid privacy budget: {0}")]
    InvalidBudget(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is singular: {0}")]
    Singular(&'static str),

    #[error("estimate does not exist: {0}")]
    NonExistent(#[from] NonExistence),

    #[error("{0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, Error>;
