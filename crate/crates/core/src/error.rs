use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} = {value} is outside its domain")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} did not converge, last bracket [{lo}, {hi}]")]
    NoConvergence {
        what: &'static str,
        lo: f64,
        hi: f64,
    },

    #[error("word is not admissible at position {position}")]
    InadmissibleWord { position: usize },

    #[error("orbit grazes a cell boundary at step {step} (iterate {value})")]
    GrazingOrbit { step: usize, value: f64 },

    #[error("excursion of about {k_estimate:.3e} iterations exceeds the cap")]
    ExcursionOverflow { k_estimate: f64 },

    #[error("depth {depth} too small to separate period {q}")]
    DepthTooSmall { depth: usize, q: usize },

    #[error("target [{lo}, {hi}] is not contained in the inducing set [1/2, 1]")]
    TargetOutsideInducingSet { lo: f64, hi: f64 },

    #[error("scaling fit rejected: R^2 = {r_squared:.4}")]
    FitRejected { r_squared: f64 },

    #[error("renewal process produced more than {limit} events before the horizon")]
    Runaway { limit: usize },

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
