//! Simulator for communication-efficient distributed fine-tuning of neural
//! models on private per-node data, with rehearsal and learning-without-
//! forgetting against catastrophic forgetting, plus an empirical
//! differential-privacy auditor based on Pareto-tail analysis of likelihood
//! ratios.

pub mod client;
pub mod corpus;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod privacy;
pub mod rng;
pub mod server;

pub use error::{Error, Result};
pub use exec::Execution;
