//! Deterministic simulator for hybrid-cloud construction and cloud-bursting
//! database benchmarks.

pub mod bench;
pub mod cli;
pub mod dbmodel;
pub mod netsim;
pub mod provision;
pub mod seed;
pub mod topology;
pub mod workload;
