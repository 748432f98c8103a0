use thiserror::Error;

use crate::structural::StructuralCheck;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("vertex set is not structural: {0}")]
    NotStructural(StructuralCheck),

    /// An interior vertex has a loop weight equal to the spectral parameter.
    #[error("singular branch weight at vertex {vertex}: lambda equals its loop weight")]
    SingularWeight { vertex: usize },

    #[error("operation requires a different graph mode: {0}")]
    InvalidMode(String),

    #[error("matrix is not primitive")]
    NotPrimitive,

    #[error("eigenvector restriction to the structural set is zero")]
    DegenerateRestriction,

    #[error("iteration failed after {iterations} steps: {reason}")]
    IterationFailed {
        iterations: usize,
        reason: String,
        /// (lambda, residual) per step, as far as the iteration got.
        trace: Vec<(f64, f64)>,
    },

    #[error("vertex {0} does not exist")]
    MissingVertex(usize),

    #[error("edge ({0}, {1}) does not exist")]
    MissingEdge(usize, usize),

    #[error("edge ({0}, {1}) already exists")]
    DuplicateEdge(usize, usize),

    #[error("column {0} would have no entries (dangling vertex)")]
    Dangling(usize),

    #[error("chain has more than one stationary distribution")]
    Ambiguous,

    #[error("simulation never reached the structural set within {0} steps")]
    StuckSimulation(usize),

    #[error("random graph generation failed after {0} attempts")]
    GenerationFailed(usize),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
