//! Simulator for distributed large-batch SGD with extrapolation.
//!
//! The crate simulates K synchronous workers on small finite-sum objectives,
//! implements mini-batch SGD, Nesterov momentum, extrapolated SGD and its
//! noise, Adam and post-local variants, and checks the convergence theory
//! for these methods numerically.

pub mod cli;
pub mod cluster;
pub mod error;
pub mod harness;
pub mod objectives;
pub mod optimizers;
pub mod par;
pub mod params;
pub mod seed;
pub mod theory;

pub use error::{Error, Result};
pub use params::ParamVector;
