//! Simulation of SDEs driven by time-changed Lévy noise.
//!
//! The physical clock is the inverse `E` of an α-stable subordinator `D`.
//! Paths of `D` are sampled on an equidistant operational grid of step δ,
//! which yields the random physical grid `τ_n = D_{nδ}`; on that grid the
//! stochastic theta method advances the state with Gaussian increments of
//! variance δ and the marks of a finite-activity Poisson random measure.
//!
//! Modules:
//! - [`subordinator`]: stable increments, paths, inverse queries, moment oracles
//! - [`noise`]: Gaussian increments and jump batches on the operational grid
//! - [`models`]: coefficient triples, built-ins and the condition auditor
//! - [`schemes`]: stochastic theta and forward-backward Euler-Maruyama paths
//! - [`convergence`]: coupled multi-level strong errors, order fits, validators
//! - [`cli`]: configuration and batch commands behind the `tcsde` binary

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod convergence;
pub mod error;
pub mod models;
pub mod noise;
pub mod par;
pub mod rng;
pub mod schemes;
pub mod special;
pub mod subordinator;

pub use error::{Error, Result};
