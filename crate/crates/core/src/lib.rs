//! Age-of-information minimization for an energy harvesting sensor with a
//! finite battery recharged one unit at a time by a Poisson process.
//!
//! * [`analytic`] solves for the optimal two-unit threshold policy and
//!   evaluates renewal-reward expectations.
//! * [`engine`] is an event-driven simulator for any battery size and policy.
//! * [`stats`] turns simulated epochs into estimates and renewal diagnostics.
//! * [`replicate`] and [`experiments`] fan runs out across seeds, in parallel
//!   when the `parallel` feature is enabled.

pub mod analytic;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod model;
pub mod policies;
pub mod quadrature;
pub mod replicate;
pub mod stats;

pub use error::{AoiError, Result};

/// Version tag carried by every JSON document this crate emits.
pub const SCHEMA_VERSION: &str = "1";
