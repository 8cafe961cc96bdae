use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("value {value} lies outside the basis domain [{lo}, {hi}]")]
    OutOfDomain { value: f64, lo: f64, hi: f64 },

    #[error("column matrix is rank deficient: numerical rank {rank} < {cols} columns")]
    RankDeficient { rank: usize, cols: usize },

    #[error("no convergence after {iterations} iterations: {what}")]
    NoConvergence { iterations: usize, what: String },

    #[error("slice sampler failed for `{parameter}`: shrinkage exhausted after {steps} steps")]
    SliceFailure { parameter: String, steps: usize },

    #[error("quadrature did not reach tolerance (estimate {estimate}, error {error})")]
    QuadratureFailure { estimate: f64, error: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("chain failed at iteration {iteration}: {source}")]
    Chain {
        iteration: usize,
        source: Box<Error>,
        /// Debug dump of the chain state at the failing sweep.
        state: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Attaches a parameter name to a slice failure raised by a generic target.
    pub fn for_parameter(self, name: &str) -> Self {
        match self {
            Error::SliceFailure { steps, .. } => Error::SliceFailure {
                parameter: name.to_string(),
                steps,
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
