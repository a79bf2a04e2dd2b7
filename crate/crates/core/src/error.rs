use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid interval: need a < b, got a = {a}, b = {b}")]
    InvalidInterval { a: f64, b: f64 },
    #[error("unknown lift map: {0}")]
    UnknownLift(String),
    #[error("blend weight tau = {0} outside [0, 1]")]
    InvalidTau(f64),
    #[error("matrix {0} is not unimodular")]
    NonUnimodular(String),
    #[error("integer overflow while {0}")]
    Overflow(&'static str),
    #[error("map is not in class G: {0}")]
    NotInClassG(String),
    #[error("separatrix types do not pair up: {0}")]
    TracingInconsistency(String),
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("canonical form is not unique for {0}")]
    CanonicalForm(String),
    #[error("arcs do not compose: {0}")]
    Composition(String),
    #[error("invalid twist support: {0}")]
    TwistSupport(String),
    #[error("saddle-node localization failed: {0}")]
    Localization(String),
    #[error("plan realization failed: {0}")]
    Realization(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Errors caused by malformed input rather than numerical trouble.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidInterval { .. }
                | Error::UnknownLift(_)
                | Error::InvalidTau(_)
                | Error::NonUnimodular(_)
                | Error::TwistSupport(_)
                | Error::InvalidArgument(_)
        )
    }
}
