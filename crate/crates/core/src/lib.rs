//! Simulation and steady-state analysis of d-way balanced allocation.
//!
//! Jobs arrive at `n` queues; each arrival probes `d` queues uniformly at
//! random and joins the least loaded one. The crate simulates this process as
//! a discrete jump chain with arrival bursts, three priority classes, stale
//! (lagged) depth snapshots and fuzzy comparisons, and computes the
//! corresponding closed-form tail distributions for comparison.
//!
//! Modules:
//! - [`model`]: domain types, seeded random streams and Poisson sampling
//! - [`scheduler`]: probing, queue selection strategies, lagged views
//! - [`engine`]: the jump simulator, measurements and recovery detection
//! - [`analysis`]: closed-form tails, effective loads and the fuzz root
//! - [`experiments`]: replicated runs, sweeps and sim-versus-theory reports
//! - [`reproduce`]: regenerates the published tables beside [`published`]
//! - [`cli`]: the `balalloc` command line

pub mod analysis;
pub mod cli;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod model;
pub mod published;
pub mod report;
pub mod reproduce;
pub mod scheduler;

pub use error::{Error, Result};
pub use model::{Priority, QueueState, RngStream, SimConfig};
pub use scheduler::StrategyKind;
