use alloc::boxed::Box;
use alloc::string::String;

use crate::pec::PecComponent;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The expectile iteration hit its cap. `last` is the final iterate.
    #[error("expectile iteration did not converge after {iterations} steps (last iterate {last})")]
    ExpectileNotConverged { iterations: usize, last: f64 },

    #[error("symmetric eigensolver did not converge: {0}")]
    EigenNotConverged(String),

    /// No restart of the principal expectile iteration reached a fixed point.
    /// The best iterate seen across all runs is attached.
    #[error("principal expectile iteration did not converge in any of {runs} runs")]
    PecNotConverged { runs: usize, best: Box<PecComponent> },

    #[error("non-negative least squares did not converge after {iterations} iterations")]
    NnlsNotConverged { iterations: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
