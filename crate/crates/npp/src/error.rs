use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on the inputs was violated.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A numerical routine failed to converge or produced non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A truncated grid fails to capture enough probability mass.
    #[error(
        "estimated tail mass {mass:.3e} beyond vmax = {vmax:.3e} exceeds tolerance {tol:.1e}; \
         pass a larger vmax or check that the density is normalizable"
    )]
    TailMass { mass: f64, vmax: f64, tol: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}

pub(crate) fn numerical(msg: impl Into<String>) -> Error {
    Error::Numerical(msg.into())
}
