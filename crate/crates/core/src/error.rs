use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Inputs with the wrong shape or outside the accepted parameter range.
    #[error("usage error: {0}")]
    Usage(String),

    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A bracketing search could not enclose the target.
    #[error("not found: {0}")]
    NotFound(String),

    /// An iteration ran out of budget. `best` is the last iterate.
    #[error("{what} did not converge after {iterations} iterations (best residual {residual:.3e})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    /// A continuation run stopped early.
    #[error("continuation failed at parameter {at}: {reason}")]
    Continuation { at: f64, reason: String },

    /// Step size collapsed during time integration.
    #[error("step size collapsed to {dt:.3e} at t = {t}; the problem looks stiff, loosen tolerances")]
    Stiffness { t: f64, dt: f64 },

    /// Non-finite state during time integration.
    #[error("solution blew up after t = {last_good_t}")]
    BlowUp { last_good_t: f64 },

    /// A checked invariant failed.
    #[error("invariant violated: {0}")]
    Invariant(String),

    /// Internal numerical inconsistency.
    #[error("internal numeric error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
