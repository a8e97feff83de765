//! Batch experiment harness for the `molpuf` simulation library:
//! seeded, reproducible reliability/uniqueness studies over reaction
//! networks or the linear-delay surrogate, with CSV tables, SVG plots,
//! and a run manifest for every invocation.
//!
//! Everything an experiment emits is a pure function of its
//! configuration and seed: worker count and scheduling never change a
//! byte of output.

pub mod config;
pub mod csvout;
pub mod experiments;
pub mod manifest;
pub mod runner;
pub mod seeds;
pub mod svg;

pub use config::{ExperimentConfig, Mode, NoiseKey, PerturbKey};
pub use experiments::{
    run_delay_model, run_reliability, run_sweep, run_traces, run_uniqueness, ExperimentError,
    ReliabilityOutcome, SweepRow, TraceOutcome, UniquenessOutcome,
};
