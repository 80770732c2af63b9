//! Experiment harness for the `jointsparse` toolkit: file formats, typed
//! configurations, synthetic scenes and the three reproducible experiments.

pub mod config;
pub mod csv;
pub mod error;
pub mod experiments;
pub mod io;
pub mod scene;

pub use error::{HarnessError, Result};
