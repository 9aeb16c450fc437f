//! Discrete-time mean field games on a one-dimensional grid.
//!
//! The crate implements fictitious play for a representative agent against
//! a population flow: exact dynamic-programming best responses, perturbed
//! responses for stress-testing, and a model-free variant built on tabular
//! Q-learning with Monte-Carlo density estimation. Convergence diagnostics
//! (exploitability, learning error, flow stability, and a-posteriori error
//! bounds) come along with each run, and a torus congestion benchmark with
//! a closed-form equilibrium anchors the test suite.

// The numeric kernels index several parallel arrays per loop; explicit
// indices read better there than zipped iterator chains.
#![allow(clippy::needless_range_loop)]

pub mod benchmark;
pub mod best_response;
pub mod config;
pub mod diagnostics;
pub mod dist;
pub mod env;
pub mod error;
pub mod flow;
pub mod fp;
pub mod grid;
pub mod policy;
pub mod runner;
pub mod transport;

pub use error::{MfgError, Result};
