//! sparsekit: a sparse-recovery toolkit.
//!
//! Sensing-matrix ensembles and their quality measures (coherence, spark,
//! restricted isometry), thresholding and projection operators, batch and
//! online sparse solvers, frame/dictionary tooling, and an experiment
//! harness with a CLI for recovery curves and phase-transition grids.

pub mod dictionaries;
pub mod ensembles;
pub mod error;
pub mod harness;
pub mod operators;
pub mod rng;
pub mod solvers_batch;
pub mod solvers_online;

pub use error::{Result, SparseError};
