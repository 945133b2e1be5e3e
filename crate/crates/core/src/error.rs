use thiserror::Error;

/// Errors raised by the semiclassical pipeline.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite state during integration at t = {t}")]
    IntegrationBlowup { t: f64 },
    #[error("value out of range: {0}")]
    Range(String),
    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("degenerate boundary-value problem: {0}")]
    DegenerateBvp(String),
    #[error("finite-difference stencil failed: {0}")]
    FdStencil(String),
    #[error("boundary data too close to a caustic of the representation: {0}")]
    CausticProximity(String),
    #[error("quadrature did not converge: relative change {rel_change:.3e}")]
    QuadratureNoConvergence { rel_change: f64 },
    #[error("outside the domain: {0}")]
    Domain(String),
    #[error("energy {energy} lies within {distance:.3e} of the pole at {pole}")]
    PoleProximity { energy: f64, pole: f64, distance: f64 },
    #[error("spectral sum not converged after {terms} terms (relative change {rel_change:.3e})")]
    Truncation { terms: usize, rel_change: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
