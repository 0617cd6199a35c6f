//! Benchmark harness for sorted speculative decoding: synthetic corpus and
//! task suite, the desk training recipe, experiment grids, threshold sweeps,
//! reports and the `s2d` command line.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod recipe;
pub mod report;
pub mod runner;
pub mod sweep;
pub mod tasks;

pub use error::{BenchError, Result};
