//! Interference analysis for multi-core platforms: resource-graph channel
//! detection, cache characterization, slowdown math, cgroup isolation
//! planning, contention simulation and dataflow fusion.

pub mod charac;
pub mod cli;
pub mod fusion;
pub mod math;
pub mod planner;
pub mod platform;
pub mod sim;
