//! Solver and simulator for an optimal capacity-remuneration contract in a
//! two-factor electricity market: available capacity follows a controlled
//! geometric diffusion, demand the exponential of a mean-reverting process.
//! A consumer-side value equation yields the contract sensitivity and the
//! recommended build effort; a stand-alone producer equation yields the
//! participation constraint; a seeded Monte Carlo engine then diffuses
//! scenarios under three policies (contract, producer-alone, no adjustment)
//! and accounts for the full payment decomposition on every path.
//!
//! The crate is data-parallel via rayon by default; build with
//! `--no-default-features` for the sequential fallback.

pub mod artifact;
pub mod calibrate;
pub mod config;
pub mod control;
pub mod error;
pub mod grid;
pub mod model;
pub mod params;
pub mod pde;
pub mod report;
pub mod sim;
pub mod units;

pub use error::{Error, Result};
pub use params::{ModelParams, Pair};
