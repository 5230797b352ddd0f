//! Configuration, measure projection and stage orchestration behind the
//! `ulamot` binary.

pub mod config;
pub mod measures;
pub mod pipeline;

pub use config::RunConfig;
pub use pipeline::{execute, Command, Failure, Overrides, Report};
