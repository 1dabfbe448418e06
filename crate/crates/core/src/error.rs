use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("quadrature did not reach tolerance {tol:e} (estimate {achieved:e}) after {intervals} subintervals")]
    QuadratureNotConverged { tol: f64, achieved: f64, intervals: usize },

    #[error("value overflows the scalar type: {what}")]
    Overflow { what: &'static str },

    #[error("initial bracket [{lower}, {upper}] does not straddle a sign change (f = {f_lower:e}, {f_upper:e})")]
    NoSignChange { lower: f64, upper: f64, f_lower: f64, f_upper: f64 },

    #[error("state diverged (|x| = {norm:e}) at t = {time}")]
    Divergence { time: f64, norm: f64 },

    #[error("time {time} is not a multiple of dt = {dt}")]
    OffGrid { time: f64, dt: f64 },

    #[error("source dt {source_dt} does not match solver dt {solver_dt}")]
    DtMismatch { source_dt: f64, solver_dt: f64 },

    #[error("tangent norm left the representable range ({norm:e}) at t = {time}; lower renorm_every")]
    TangentRange { time: f64, norm: f64 },

    #[error("last component became non-positive ({value:e}) at t = {time}")]
    SignViolation { time: f64, value: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
