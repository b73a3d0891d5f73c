use thiserror::Error;

/// Errors raised by grid construction, energy evaluation and the solvers.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("length mismatch: expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value at node {node} while computing {quantity}")]
    NonFinite { node: usize, quantity: &'static str },
    #[error("expression error: {0}")]
    Expr(String),
    #[error("field is not in the positive cone of I (I(u) = {value:e})")]
    NotInPositiveCone { value: f64 },
    #[error("no convergence after {iterations} iterations (best residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        /// Best iterate seen, as `f64` node values.
        best: Vec<f64>,
    },
    #[error("singular jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("linear system is singular (pivot {pivot} vanished)")]
    SingularMatrix { pivot: usize },
    #[error("resonant lambda = {lambda}: within tolerance of eigenvalue {eigenvalue}, index ambiguous")]
    Resonant { lambda: f64, eigenvalue: f64 },
    #[error("bump supports {0} and {1} overlap or touch")]
    OverlappingSupports(usize, usize),
    #[error("operation requires p = 2, got p = {0}")]
    RequiresLinear(f64),
    #[error("linking geometry: {0}")]
    Geometry(String),
    #[error("mountain-pass path collapsed onto endpoint {endpoint}")]
    PathCollapse { endpoint: usize },
    #[error("frozen boundary sample {sample} has Phi = {value:e} > 0")]
    BoundaryViolation { sample: usize, value: f64 },
    #[error("C- model unavailable: {0}")]
    ModelUnavailable(String),
    #[error("invalid sampling plan: {0}")]
    InvalidSampling(String),
    #[error("problem too large for dense solve: {dofs} unknowns (limit {limit})")]
    TooLarge { dofs: usize, limit: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
