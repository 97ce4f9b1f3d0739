//! Simulation engine for sizing photovoltaic plants that power pumping in
//! water distribution networks.
//!
//! The library is organized as a pipeline:
//!
//! * [`pv`] turns weather into PV power (physical panel model), fits a
//!   stochastic day-profile model to historical power, and samples
//!   scenarios and whole years from it.
//! * [`wdn`] holds a small nonlinear "truth" network, identifies a linear
//!   tank model from simulated data, and provides power accounting.
//! * [`empc`] schedules pumps with a scenario-based economic MPC over the
//!   identified model and runs closed-loop simulations.
//! * [`sizing`] wraps everything in a lifetime cost oracle and minimizes
//!   it over the installed PV size with Nelder-Mead.
//! * [`io`] reads and writes the CSV and key-value formats shared by the
//!   command line tools.

pub mod empc;
pub mod error;
pub mod io;
mod linalg;
pub mod pv;
pub mod seed;
pub mod sizing;
pub mod wdn;

pub use error::{Error, Result};
