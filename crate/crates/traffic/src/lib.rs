//! IO, synthetic data, artifact emission and the batch pipeline around
//! [`pec_core`].
//!
//! * [`ingest`] reads per-minute count CSVs (`date,location,minute,count`).
//! * [`datagen`] produces seeded synthetic detector data with injected
//!   directional extremes and their ground truth.
//! * [`artifacts`] renders models and analyses as CSV/JSON and tracks hashes.
//! * [`run`] wires everything into the `pec-traffic` command.

pub mod artifacts;
pub mod datagen;
mod error;
pub mod ingest;
pub mod run;

pub use error::{Error, Result};
pub use run::{run, RunConfig, RunReport};
