//! Experiment runner for the attribution toolkit: closed-form tables,
//! repeated simulations, log fitting and verification suites.

pub mod config;
pub mod error;
pub mod fit;
pub mod scenario;
pub mod simulate;
pub mod synth;
pub mod table;
pub mod verify;

pub use error::{CliError, Result};
