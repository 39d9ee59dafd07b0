//! Round-trip translation quality estimation: providers, the scoring
//! pipeline, reports and the `rttqe` command line.
//!
//! The metrics and statistics themselves live in `rttqe-core`.

pub mod cli;
pub mod config;
pub mod pipeline;
pub mod providers;
pub mod report;
pub mod rundir;
