use thiserror::Error;

/// Errors raised anywhere in the discretization pipeline.
#[derive(Error, Debug)]
pub enum StokesError {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("malformed mesh file at line {line}: {reason}")]
    MeshFormat { line: usize, reason: String },
    #[error("unsupported quadrature degree {0} (supported: 1..=10)")]
    UnsupportedQuadratureDegree(usize),
    #[error("invalid polynomial degree {degree} for {what}")]
    InvalidDegree { degree: usize, what: &'static str },
    #[error("penalty parameter must exceed 1, got {0}")]
    InvalidPenalty(f64),
    #[error("local saddle-point problem on cell {cell} is singular (smallest singular value ratio {ratio:e})")]
    SingularLocalProblem { cell: usize, ratio: f64 },
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("iterative solver did not converge after {iterations} iterations (last residuals: {history:?})")]
    NotConverged { iterations: usize, history: Vec<f64> },
    #[error("velocity is not discretely divergence-free: |B z| = {residual:e}")]
    NotInKernel { residual: f64 },
    #[error("error values must be positive, got ({0:e}, {1:e})")]
    NonPositiveError(f64, f64),
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = StokesError> = std::result::Result<T, E>;
