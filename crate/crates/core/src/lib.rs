//! Penalty-based push-sum optimization over time-varying directed graphs.
//!
//! A group of agents cooperatively minimizes a sum of local convex objectives
//! subject to local convex constraints, communicating only along the directed
//! edges of a round-varying graph. Constraints are folded into the objective
//! through a smooth penalty that grows over time, and the push-sum ratio
//! `w/y` cancels the imbalance that directed, non-doubly-stochastic
//! communication would otherwise introduce.
//!
//! The crate provides:
//!
//! * [`penalty`] — local objectives, constraints, and penalized gradient oracles;
//! * [`schedules`] — step-size / penalty-parameter sequences and their certification;
//! * [`netgraph`] — directed graph schedules and B-strong-connectivity checks;
//! * [`engine`] — the lockstep round-based simulator;
//! * [`energy`] — the smart-grid dispatch instance family with a KKT checker;
//! * [`oracle`] — independent centralized solvers used for validation;
//! * [`config`] / [`runner`] — JSON-config-driven CLI plumbing.

pub mod config;
pub mod energy;
pub mod engine;
pub mod error;
pub mod netgraph;
pub mod numeric;
pub mod oracle;
pub mod penalty;
pub mod runner;
pub mod schedules;

pub use error::Error;

/// Crate result alias.
pub type Result<T> = std::result::Result<T, Error>;
