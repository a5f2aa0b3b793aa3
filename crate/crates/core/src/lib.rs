//! Simulated cloud-edge microservice cluster with a TD3 resource scheduler,
//! DQN/DDPG/static baselines and an experiment harness.

pub mod agents;
pub mod domain;
pub mod error;
pub mod harness;
pub mod nn;
pub mod reward;
pub mod rng;
pub mod sim;
pub mod workload;

pub use error::{Error, Result};
