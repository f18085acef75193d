use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("diagonal entry of vertex {vertex} is {value}, expected > 0")]
    NonPositiveDiagonal { vertex: usize, value: f64 },

    #[error("graph is disconnected ({} components): {components:?}", components.len())]
    DisconnectedGraph { components: Vec<Vec<usize>> },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("vertex {vertex} out of range for a problem with {n} vertices")]
    VertexOutOfRange { vertex: usize, n: usize },

    #[error("duplicate entry ({i}, {j})")]
    DuplicateEntry { i: usize, j: usize },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("no value for directed edge {{{from},{to}}}")]
    MissingEdgeValue { from: usize, to: usize },

    #[error("invalid witness: {0}")]
    InvalidWitness(String),

    #[error("update of directed edge {{{from},{to}}} is ill-posed")]
    IllPosed { from: usize, to: usize },

    #[error("problem is not walk-summable: spectral radius of |R| is {rho}")]
    NotWalkSummable { rho: f64 },

    #[error("fixed-point iteration did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("power iteration did not converge: last estimates {last} and {previous}")]
    NoConvergence { last: f64, previous: f64 },

    #[error("spectral radius of |A| is {rho}, expected < 1")]
    SpectralRadiusTooLarge { rho: f64 },

    #[error("invalid walk: {0}")]
    InvalidWalk(String),

    #[error("walk {0:?} backtracks")]
    BacktrackingWalk(Vec<usize>),

    #[error("walk enumeration would exceed the budget of {budget} nodes")]
    EnumerationBudgetExceeded { budget: u64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}
