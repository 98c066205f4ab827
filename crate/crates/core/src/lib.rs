//! Finite-temperature Cauchy-Born stress of Bravais crystals.

pub mod asymptotics;
pub mod atoms;
pub mod brillouin;
pub mod cli;
pub mod config;
pub mod crystal;
pub mod error;
pub mod harmonics;
pub mod jet;
pub mod lattice;
pub mod md;
pub mod potential;
pub mod stress;

pub use error::{Error, Result};
