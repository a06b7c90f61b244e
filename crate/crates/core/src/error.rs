use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },

    #[error(
        "exponent overflow in Gibbs rate {from}->{to} at t={time:.6}: exponent {exponent:.3e} > 700; \
         use a larger eta or rescale the switching costs"
    )]
    Overflow {
        from: usize,
        to: usize,
        time: f64,
        exponent: f64,
    },

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("non-finite value produced by {what} at t={time:.6}")]
    NonFinite { what: &'static str, time: f64 },

    #[error(
        "negative occupancy {mass:.3e} in regime {regime} at t={time:.6}; \
         the forward integration is unstable, use a smaller step"
    )]
    Instability { regime: usize, time: f64, mass: f64 },

    #[error("invalid switching path: {0}")]
    Path(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
