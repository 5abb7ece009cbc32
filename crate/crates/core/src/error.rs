use thiserror::Error;

use crate::vot::SolverState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("index {index} out of range for {len} centroids")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("domain polygon is not convex and counterclockwise")]
    NonConvexDomain,
    #[error("centroids {first} and {second} share the same position")]
    DuplicateCentroids { first: usize, second: usize },
    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),
    #[error("solver did not converge after {} iterations (max deviation {:.3e})", .state.iteration, .state.max_deviation())]
    NonConvergence { state: Box<SolverState> },
    #[error("degenerate configuration at iteration {}: {reason}", .state.iteration)]
    DegenerateConfiguration { reason: String, state: Box<SolverState> },
    #[error("cluster {0} received no samples")]
    DegenerateCluster(usize),
    #[error("outer iteration {iteration}: {source}")]
    Inner {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether this error (or the error it wraps) is a solver failure rather than bad input.
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::NonConvergence { .. } | Error::DegenerateConfiguration { .. } => true,
            Error::Inner { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }

    /// Last solver state carried by a solver failure, if any.
    pub fn solver_state(&self) -> Option<&SolverState> {
        match self {
            Error::NonConvergence { state } | Error::DegenerateConfiguration { state, .. } => {
                Some(state)
            }
            Error::Inner { source, .. } => source.solver_state(),
            _ => None,
        }
    }
}
