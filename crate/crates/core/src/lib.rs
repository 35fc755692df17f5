//! Numerical toolkit for advertising-attribution mechanisms.
//!
//! Click times live on a conversion-aligned axis (the conversion happens at
//! `t = 0`, clicks at `t <= 0`). Platforms report `r = t + tau` with a
//! self-chosen delay `tau >= 0`; a mechanism turns the report vector into
//! credits.

pub mod analysis;
pub mod dist;
pub mod equilibrium;
pub mod error;
pub mod ingest;
pub mod mech;
pub mod metrics;
pub mod numeric;
pub mod sim;

pub use dist::{DistProfile, TimeDist};
pub use error::{Error, Result};
pub use mech::{Allocation, Lcm, Mechanism, Pvm, PvmTable, TreeMechanism};
pub use metrics::MetricEstimate;
