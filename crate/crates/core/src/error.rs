use thiserror::Error;

/// Errors raised anywhere in the solver and reduced-order pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of admissible range: {0}")]
    ParameterDomain(String),

    #[error("mesh quality: element {element} has non-positive Jacobian determinant {det_j:.3e}")]
    MeshQuality { element: usize, det_j: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("point ({x}, {y}) lies outside the fluid domain")]
    PointLookup { x: f64, y: f64 },

    #[error("linear solve failed at nu = {nu}, iteration {iteration}: {reason}")]
    Solver {
        nu: f64,
        iteration: usize,
        reason: String,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("interpolation system is singular: {0}")]
    SingularInterpolation(String),

    #[error("provenance mismatch: {0}")]
    Provenance(String),

    #[error("artifact store: {0}")]
    Store(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
