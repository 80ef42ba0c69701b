//! Closed-loop simulation of VANET-fed traffic signal control under Sybil
//! attack, with a trust-based filter for malicious reports.
//!
//! The modules follow the data flow of one simulated second:
//! [`traffic`] holds the ground truth, [`vanet`] turns it into reports and
//! adds fabricated ones, [`trust`] scores and filters them, [`signal`]
//! decides the next phases from what passed the filter, and [`metrics`]
//! tallies accuracy and delay. [`sim`] wires one run together and
//! [`harness`] sweeps whole experiment grids.

pub mod config;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod replay;
pub mod rng;
pub mod signal;
pub mod sim;
mod spatial;
pub mod topology;
pub mod traffic;
pub mod trust;
pub mod vanet;

pub use error::{Error, Result};
