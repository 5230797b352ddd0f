//! Optimal transport of cell measures through discretized control systems.
//!
//! The pipeline discretizes a map `T: X x U -> X` into one row-stochastic
//! matrix per control ([`ulam`]), checks support reachability
//! ([`reachability`]), solves a linear program over measure trajectories and
//! joint state-control masses ([`lp`]), and turns the optimum into per-cell
//! stochastic feedback laws that can be propagated on the chain or rolled out
//! on the original system ([`feedback`]).
//!
//! Data-parallel loops use rayon when the `parallel` feature is enabled (the
//! default) and fall back to sequential iteration otherwise; see [`par`].

pub mod error;
pub mod feedback;
pub mod grid;
pub mod lp;
pub mod par;
pub mod reachability;
pub mod systems;
pub mod ulam;

pub use error::{Error, Result};
