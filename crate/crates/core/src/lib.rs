//! Trace-driven performance modeling on dynamic event-dependence graphs.
//!
//! A program's dynamic instruction stream is turned into a directed acyclic
//! graph whose vertices are microarchitectural events (fetch, dispatch,
//! execute, memory, commit, ...) and whose edges carry the minimum latency
//! lag between two events. Every edge weight is a vector with one lane per
//! machine configuration, so several what-if scenarios are evaluated in a
//! single pass over the trace. The length of the longest path to the last
//! commit event is the modeled execution time.
//!
//! The crate is `no_std` (it needs `alloc`). Trace files, configuration
//! files, reports and the command-line driver live in the `degkit` crate.
//!
//! Module map:
//!
//! * [`trace`]: instruction records, seq validation, synthetic traces.
//! * [`cost`]: cost table, functional cache hierarchy, branch models.
//! * [`deg`]: the streaming vector-weighted graph itself.
//! * [`model`]: in-order and out-of-order core builders.
//! * [`edge_isa`]: block-structured (EDGE) cores and block formats.
//! * [`whatif`]: scenarios, lane plans and trace transformations.
//! * [`analysis`]: CPI, critical-path breakdowns, comparisons, reports.
//! * [`oracle`]: independent longest-path and schedule checkers.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod analysis;
pub mod config;
pub mod cost;
pub mod deg;
pub mod edge_isa;
mod error;
pub mod hash;
pub mod model;
pub mod oracle;
pub mod trace;
pub mod whatif;

pub use error::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;
