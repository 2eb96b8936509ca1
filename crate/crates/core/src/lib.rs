//! Joint computation offloading and routing on multi-hop wireless edge
//! networks via shortest-path-biased backpressure over virtual sinks.

pub mod baselines;
#[cfg(feature = "cli")]
pub mod cli;
pub mod compute;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod extended;
pub mod fixtures;
pub mod lp;
pub mod metrics;
pub mod netgraph;
pub mod queueing;
pub mod rng;
pub mod spbp;
pub mod traffic;

pub use baselines::Scheme;
pub use engine::{run, run_instance, FadingParams, Instance, RunOutput, Scenario, SimConfig, Simulation};
pub use error::{Error, Result};
