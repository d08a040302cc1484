//! Simulation and verification of time-reversed Markov jump processes.
//!
//! A forward process is given by its martingale-problem data
//! ([`model::ProcessSpec`]). From its marginal flow the [`reversal`] module
//! solves the flux equation for the backward jump kernel and backward drift;
//! [`verify`] checks those against reversed Monte Carlo paths and the
//! carré du champ integration-by-parts identity, and [`entropy`] handles
//! Girsanov tilts and path relative entropy.

pub mod error;
pub mod expr;
pub mod model;

pub use error::{Error, Result};
pub mod rng;
pub mod simulate;
pub mod csvfmt;
pub mod marginals;
pub mod reversal;
pub mod presets;
pub mod entropy;
pub mod verify;
pub mod config;
