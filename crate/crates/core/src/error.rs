use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("argument out of supported range: {0}")]
    OutOfRange(String),

    #[error("{function} is singular at z = 0")]
    Singular { function: &'static str },

    #[error("point lies within {tol:e} of the boundary of resonator {index}; a side must be selected")]
    OnBoundary { index: usize, tol: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("resonance search: {0}")]
    ResonanceSearch(String),

    #[error("degenerate smallest singular value at omega = {omega}: ratio {ratio:e}")]
    DegenerateMode { omega: num_complex::Complex64, ratio: f64 },

    #[error("quadrature: {0}")]
    Quadrature(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("solver diverged: |X| = {norm:e}")]
    Divergence { norm: f64 },

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("phase unwrap failed between Omega = {lo} and Omega = {hi}: {suggestion}")]
    Unwrap { lo: f64, hi: f64, suggestion: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
