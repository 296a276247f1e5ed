use thiserror::Error;

/// Errors raised by the solver stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid configuration or incompatible inputs (grid mismatch, odd size, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Inputs outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Newton inversion of a flow map did not converge.
    #[error("flow-map inversion did not converge after {iterations} iterations (worst residual {worst_residual:.3e})")]
    NewtonDiverged { iterations: usize, worst_residual: f64 },

    /// The state stopped being finite or exceeded the blow-up bound.
    #[error("solution blew up at t = {t:.6} (max |v| = {vmax:.3e}); the grid is likely under-resolved or dt too large")]
    BlowUp { t: f64, vmax: f64 },

    /// Courant number above the configured limit.
    #[error("CFL violated at t = {t:.6}: courant number {courant:.3} exceeds {limit:.3}")]
    Cfl { t: f64, courant: f64, limit: f64 },

    /// A requested time is not covered by a stored trajectory.
    #[error("trajectory does not cover t = {0:.6}")]
    Coverage(f64),

    /// Generic numerical failure (singular factorization and similar).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
