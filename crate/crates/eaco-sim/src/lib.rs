//! Discrete-event simulator for energy-aware co-allocation of deep-learning
//! training jobs on shared GPU clusters.
//!
//! The library models a cluster of multi-GPU nodes executing long-running
//! training jobs, with a measured profile database as the ground truth for
//! power draw, per-epoch times, and interference between co-located jobs.
//! Four scheduling policies are provided: plain FIFO, FIFO with packing,
//! a Gandiva-style introspective packer, and EaCO, a deadline-aware
//! co-allocation algorithm with history-based prediction, trial monitoring,
//! and undo at epoch boundaries.
//!
//! Start from the runnable programs in `examples/`:
//!
//! ```text
//! cargo run --example single_job_energy      # one job, one node, measured energy
//! cargo run --example colocated_sets         # co-located sets reproduce measurements
//! cargo run --example energy_savings         # sharing vs exclusive energy arithmetic
//! cargo run --example compare_schedulers     # four policies on one contention trace
//! cargo run --example generate_trace         # synthetic trace generation
//! cargo run --example deadline_safety        # trial/undo protocol under tight deadlines
//! cargo run --example event_log_stepping     # single-stepping the event engine
//! ```
//!
//! A thin binary (`eaco-sim`) wraps the same entry points behind `run`,
//! `compare`, and `gen-trace` subcommands.

pub mod cli;
pub mod cluster;
pub mod config;
pub mod error;
pub mod metrics;
pub mod profiledb;
pub mod schedulers;
pub mod simengine;
pub mod workload;

pub use error::{Result, SimError};
pub use profiledb::ProfileDb;
