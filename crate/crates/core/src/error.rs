use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid sheet state: {0}")]
    InvalidState(String),

    #[error("degenerate segment between nodes {0} and {1}")]
    DegenerateSegment(usize, usize),

    #[error("Biot-Savart kernel evaluated at a singular point")]
    KernelSingularity,

    #[error("operation requires arclength parametrization, got {0}")]
    NotArclength(String),

    #[error("quadrature spec invalid: {0}")]
    InvalidQuadrature(String),

    #[error("states are on mismatched grids: {0}")]
    GridMismatch(String),

    #[error("self-approach: nodes {i} and {j} at distance {dist:.3e} (resolution {resolution:.3e})")]
    SelfApproach {
        i: usize,
        j: usize,
        dist: f64,
        resolution: f64,
    },

    #[error("CFL violation: max |a| dt = {reach:.3e} exceeds node spacing {spacing:.3e}")]
    CflViolation { reach: f64, spacing: f64 },

    #[error("point lies on the sheet; off-sheet velocity undefined")]
    OnSheet,

    #[error("power iteration did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
