use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenewalError {
    /// An argument lies outside the domain of the operation (e.g. `t < u`).
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid parameters when building a kernel, grid or law.
    #[error("invalid construction: {0}")]
    Construction(String),

    /// Numerical settings that cannot deliver the requested accuracy.
    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    /// A quantity that must be constant (or bounded) is not, beyond tolerance.
    #[error("inconsistent result: {0}")]
    Inconsistency(String),

    /// The thinning sampler exhausted its proposal budget; the kernel's
    /// declared bounds are almost certainly wrong.
    #[error("thinning proposal cap of {cap} reached starting from u = {start}")]
    ProposalCap { cap: usize, start: f64 },

    #[error("unreliable result: {0}")]
    Unreliable(String),
}

pub type Result<T> = std::result::Result<T, RenewalError>;
