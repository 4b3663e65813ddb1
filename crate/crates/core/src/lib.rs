//! Principal expectile components: PCA in an asymmetric norm.
//!
//! The crate is `no_std` (with `alloc`) and contains only the numerical side of
//! the pipeline:
//!
//! * [`asymnorm`]: asymmetric `l1`/`l2` norms, sample expectiles by asymmetric
//!   weighted least squares, and the `tau`-variance.
//! * [`linalg`]: a small dense matrix type and a symmetric eigensolver.
//! * [`pec`]: principal expectile components, deflation and projection.
//! * [`spline`] and [`nnls`]: M-spline bases and non-negative least squares.
//! * [`preprocess`]: raw per-minute counts to smoothed flow profiles.
//! * [`analysis`]: directional-extreme labels, membership proportions, effect
//!   curves and summary tables.
//!
//! IO, synthetic data and the command line live in the `pec-traffic` crate.
#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod analysis;
pub mod asymnorm;
mod error;
pub mod linalg;
pub mod nnls;
pub mod pec;
pub mod preprocess;
pub mod spline;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use asymnorm::{asym_norm, expectile, tau_variance, ExpectileLevel, ExpectileResult, Sample};
pub use error::{Error, Result};
pub use pec::{
    deflate, fit, largest_eigenvector, pec_first, project, weighted_center, weighted_cov,
    Deflation, FitOptions, PecComponent, PecModel, ProfileId, ProfileMatrix, WeightPartition,
};
