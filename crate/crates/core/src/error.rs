use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A precondition on the call (sizes, counts, grids) was violated.
    #[error("usage error: {0}")]
    Usage(String),

    /// Adaptive quadrature did not reach tolerance.
    #[error(
        "quadrature did not converge after {subdivisions} subdivisions \
         (numerator {numerator:e} +/- {numerator_err:e}, denominator {denominator:e} +/- {denominator_err:e})"
    )]
    NonConvergence {
        subdivisions: usize,
        numerator: f64,
        numerator_err: f64,
        denominator: f64,
        denominator_err: f64,
    },

    /// The kernel has no direct sampler for its mixing density.
    #[error("kernel `{0}` has no direct sampler")]
    UnsupportedKernel(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}
