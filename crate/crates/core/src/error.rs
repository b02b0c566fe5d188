use thiserror::Error;

/// Unified error type for mesh construction, assembly and solves.
#[derive(Debug, Error)]
pub enum HomogError {
    #[error("invalid resolution: {0}")]
    InvalidResolution(String),

    #[error("solid region touches the cell boundary: {0}")]
    SolidTouchesBoundary(String),

    #[error("permeability contrast violation: {0}")]
    ContrastViolation(String),

    #[error("inconsistent constraints: {0}")]
    InconsistentConstraints(String),

    #[error("no convergence in {context}: residual {residual:.3e} after {iterations} iterations")]
    NoConvergence {
        context: String,
        residual: f64,
        iterations: usize,
    },

    #[error("incompatible boundary flux: {0}")]
    IncompatibleFlux(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSPD(String),

    #[error("under-resolved configuration: {0}")]
    UnderResolved(String),

    #[error("formula mismatch: {0}")]
    FormulaMismatch(String),

    #[error("validation error: {0}")]
    ValidationError(String),
}
