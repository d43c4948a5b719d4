//! Entropy-balancing weights for continuous exposures and weighted local
//! linear dose-response estimation, with balance diagnostics, a parametric
//! GPS comparator, a full-pipeline bootstrap and a simulation harness.

pub mod balance;
pub mod bootstrap;
pub mod dataset;
pub mod drc;
pub mod error;
pub mod gps;
pub mod linalg;
pub mod pipeline;
pub mod simbench;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
