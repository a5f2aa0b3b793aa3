//! Scheduling policies behind one observe/act/learn interface.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{ActionVector, RawServiceMetrics, StateVector, Transition};
use crate::error::{Error, Result};
use crate::nn::Mlp;

pub mod actor_critic;
pub mod basek;
pub mod dqn;

pub use actor_critic::{
    clipped_noise, exploration_sigma, td_target, ActorCriticAgent, TdTargets, Td3Hyper, Variant,
};
pub use basek::{BaseKConfig, BaseKMode, BaseKScheduler};
pub use dqn::{level_value, DqnAgent, DqnHyper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Td3,
    Ddpg,
    Dqn,
    Basek,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Td3, Algorithm::Ddpg, Algorithm::Dqn, Algorithm::Basek];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Td3 => "td3",
            Algorithm::Ddpg => "ddpg",
            Algorithm::Dqn => "dqn",
            Algorithm::Basek => "basek",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::validation("algorithm", format!("unknown algorithm `{s}`")))
    }
}

/// What an agent sees when choosing an action.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub state: &'a StateVector,
    pub raw: &'a [RawServiceMetrics],
    /// Environment steps taken so far across all episodes of the run.
    pub global_step: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainStats {
    /// Buffer guard not yet satisfied; nothing was updated.
    pub skipped: bool,
    pub critic_losses: Vec<f64>,
    pub actor_loss: Option<f64>,
    pub actor_updated: bool,
    pub targets_updated: bool,
    /// Largest |noise| added to a target action in this step.
    pub max_abs_smoothing_noise: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UpdateCounters {
    pub critic_updates: u64,
    pub actor_updates: u64,
    pub target_updates: u64,
}

pub trait Agent: Send {
    fn algorithm(&self) -> Algorithm;

    fn act(&mut self, obs: &Observation<'_>, explore: bool) -> Result<ActionVector>;

    /// Stores a transition for later learning. No-op for non-learning agents.
    fn observe(&mut self, transition: Transition) -> Result<()>;

    fn train_step(&mut self) -> Result<TrainStats>;

    /// The network that defines the greedy policy, if any.
    fn policy(&self) -> Option<&Mlp>;

    /// Replaces the policy network with loaded parameters.
    fn load_policy(&mut self, net: Mlp) -> Result<()>;

    fn counters(&self) -> UpdateCounters;
}

pub(crate) fn check_policy_shape(current: &Mlp, loaded: &Mlp) -> Result<()> {
    if current.same_architecture(loaded) {
        Ok(())
    } else {
        Err(Error::Contract(format!(
            "policy architecture {:?} does not match agent {:?}",
            loaded.sizes(),
            current.sizes()
        )))
    }
}

impl Agent for BaseKScheduler {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Basek
    }

    fn act(&mut self, obs: &Observation<'_>, _explore: bool) -> Result<ActionVector> {
        self.decide(obs.raw)
    }

    fn observe(&mut self, _transition: Transition) -> Result<()> {
        Ok(())
    }

    fn train_step(&mut self) -> Result<TrainStats> {
        Ok(TrainStats {
            skipped: true,
            ..Default::default()
        })
    }

    fn policy(&self) -> Option<&Mlp> {
        None
    }

    fn load_policy(&mut self, _net: Mlp) -> Result<()> {
        Err(Error::Contract("basek has no policy parameters".into()))
    }

    fn counters(&self) -> UpdateCounters {
        UpdateCounters::default()
    }
}
