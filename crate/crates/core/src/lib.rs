//! Simulation and analysis of spontaneous four-wave-mixing photon-pair
//! sources in dispersion-engineered fiber.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN

pub mod cli;
pub mod counting;
pub mod dispersion;
pub mod error;
pub mod fixture;
pub mod io;
pub mod jsa;
pub mod phasematch;
pub mod schmidt;
pub mod spectral;

pub use error::{Error, Result};
