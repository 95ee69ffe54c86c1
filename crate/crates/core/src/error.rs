//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failures raised by the solvers and diagnostics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("no bifurcation: 8*zeta = {lhs} exceeds (pi*f)^2 = {rhs}")]
    NoBifurcation { lhs: f64, rhs: f64 },

    #[error("degenerate bifurcation: 8*zeta equals (pi*f)^2, the only root has sin(theta) = 0")]
    DegenerateBifurcation,

    #[error("epsilon must be positive for the rescaling map")]
    ZeroEpsilon,

    #[error("unsupported derivative order {0}; only 1 and 2 are available")]
    UnsupportedOrder(u32),

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("Jacobian is numerically singular (pivot ratio {ratio:.3e})")]
    SingularJacobian { ratio: f64 },

    #[error("continuation failed at step {index}: {source}")]
    ContinuationFailed {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("equilibrium is not a saddle-focus: alpha = {alpha:.3e}, beta = {beta:.3e}")]
    NotSaddleFocus { alpha: f64, beta: f64 },

    #[error("integrator left the ball of radius {radius:.3e} at x = {x:.4}")]
    IntegratorBlowup { x: f64, radius: f64 },

    #[error("integrator step size underflow at x = {x:.4}")]
    StepSizeUnderflow { x: f64 },

    #[error("critical eigenvalue tracking became ambiguous at xi = {xi:.4} (gap ratio {ratio:.3})")]
    TrackingLost { xi: f64, ratio: f64 },

    #[error("window too small: doubling the window moved the small eigenvalues by {relative_change:.3}")]
    WindowTooSmall { relative_change: f64 },

    #[error("critical-curve fit is ill conditioned: {0}")]
    FitIllConditioned(String),

    #[error("time integration blew up at t = {t:.4} (sup norm {sup_norm:.3e})")]
    Blowup { t: f64, sup_norm: f64 },

    #[error("relaxation to the discrete fixed point stalled at t = {time:.4} (per-step change {change:.3e})")]
    RelaxationFailed { time: f64, change: f64 },

    #[error("perturbation reached the domain boundary at t = {t:.4} (tail fraction {tail_fraction:.3e})")]
    DomainTooSmall { t: f64, tail_fraction: f64 },

    #[error("linear algebra failure: {0}")]
    Linalg(String),
}

pub type Result<T> = std::result::Result<T, Error>;
