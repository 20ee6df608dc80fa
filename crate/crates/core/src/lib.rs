//! Simulation and estimation toolkit for the inference-cost Phillips curve.

pub mod error;
pub mod formulas;
pub mod gmm;
pub mod hac;
pub mod io;
pub mod meanfield;
pub mod panel;
pub mod scaling;
pub mod sim;
pub mod stats;

pub use error::{IcpcError, Result};
