//! Experiment drivers and file formats behind the `shapefit` command.

pub mod benchmark;
mod error;
pub mod evaluate;
pub mod formats;
pub mod learn;
pub mod methods;
pub mod phase;
pub mod synth;

pub use error::{HarnessError, Result};
