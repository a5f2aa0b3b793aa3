//! Experiment configuration, read from a single TOML document.
//!
//! Every table rejects unknown keys. Omitted keys take their defaults.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{Algorithm, BaseKConfig, DqnHyper, Td3Hyper};
use crate::domain::{default_nodes, default_services, NodeSpec, NormalizationConfig, ServiceSpec};
use crate::error::{Error, Result};
use crate::reward::RewardConfig;
use crate::sim::{LatencyModel, SimConfig};
use crate::workload::{load_trace, WeightPreset, WorkloadSource};

pub const CONFIG_VERSION: u32 = 1;
pub const NORMAL_LOAD_QPS: f64 = 100.0;
pub const HIGH_LOAD_QPS: f64 = 300.0;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Scenario {
    Normal100,
    High300,
    Trace(PathBuf),
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::Normal100 => f.write_str("normal_100"),
            Scenario::High300 => f.write_str("high_300"),
            Scenario::Trace(p) => write!(f, "trace:{}", p.display()),
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal_100" => Ok(Scenario::Normal100),
            "high_300" => Ok(Scenario::High300),
            _ => match s.strip_prefix("trace:") {
                Some(p) if !p.is_empty() => Ok(Scenario::Trace(PathBuf::from(p))),
                _ => Err(Error::validation(
                    "scenario",
                    format!("`{s}` is not normal_100, high_300 or trace:<path>"),
                )),
            },
        }
    }
}

impl Serialize for Scenario {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Scenario {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Simulator settings. Episode length comes from `steps_per_episode` and the
/// seed from the run, so neither appears here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub l_target_ms: f64,
    pub step_duration_s: f64,
    pub latency: LatencyModel,
    pub normalization: NormalizationConfig,
    pub services: Vec<ServiceSpec>,
    pub nodes: Vec<NodeSpec>,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            l_target_ms: d.l_target_ms,
            step_duration_s: d.step_duration_s,
            latency: d.latency,
            normalization: d.normalization,
            services: default_services(),
            nodes: default_nodes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadSection {
    pub weights: WeightPreset,
    /// Relative std-dev of per-step multiplicative jitter on the aggregate rate.
    pub jitter: f64,
}

impl Default for WorkloadSection {
    fn default() -> Self {
        Self {
            weights: WeightPreset::Uniform,
            jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub version: u32,
    pub algorithm: Algorithm,
    pub episodes: u64,
    pub steps_per_episode: u64,
    pub scenario: Scenario,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Write measured wall time per episode; when false the column is 0 and
    /// the metrics files depend on nothing but the config and seed.
    pub record_wall_time: bool,
    pub sim: SimSection,
    pub workload: WorkloadSection,
    pub reward: RewardConfig,
    pub td3: Td3Hyper,
    pub dqn: DqnHyper,
    pub basek: BaseKConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            algorithm: Algorithm::Td3,
            episodes: 50,
            steps_per_episode: 20,
            scenario: Scenario::Normal100,
            seeds: vec![0, 1, 2, 3],
            output_dir: PathBuf::from("runs/default"),
            record_wall_time: true,
            sim: SimSection::default(),
            workload: WorkloadSection::default(),
            reward: RewardConfig::default(),
            td3: Td3Hyper::default(),
            dqn: DqnHyper::default(),
            basek: BaseKConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(one_line(&e.to_string())))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a config file. A relative trace path is resolved against the
    /// file's directory and stored as an absolute path.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        if let Scenario::Trace(p) = &config.scenario {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new(""));
                let joined = base.join(p);
                let resolved = std::path::absolute(&joined).map_err(|e| Error::io(&joined, e))?;
                config.scenario = Scenario::Trace(resolved);
            }
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {}, expected {CONFIG_VERSION}",
                self.version
            )));
        }
        if self.episodes < 1 {
            return Err(Error::validation("episodes", "must be >= 1"));
        }
        if self.steps_per_episode < 1 {
            return Err(Error::validation("steps_per_episode", "must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::validation("seeds", "at least one seed required"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::validation("seeds", "duplicate seed"));
        }
        if !(self.workload.jitter >= 0.0) {
            return Err(Error::validation("workload.jitter", "must be >= 0"));
        }
        self.reward.weights.validate()?;
        self.td3.validate()?;
        self.dqn.validate()?;
        self.sim_config(0).validate()
    }

    pub fn n_services(&self) -> usize {
        self.sim.services.len()
    }

    pub fn sim_config(&self, seed: u64) -> SimConfig {
        SimConfig {
            services: self.sim.services.clone(),
            nodes: self.sim.nodes.clone(),
            l_target_ms: self.sim.l_target_ms,
            episode_len: self.steps_per_episode,
            step_duration_s: self.sim.step_duration_s,
            latency: self.sim.latency,
            normalization: self.sim.normalization,
            seed,
        }
    }

    /// Builds the workload for the configured scenario, reading the trace
    /// file if there is one.
    pub fn workload_source(&self) -> Result<WorkloadSource> {
        let n = self.n_services();
        let source = match &self.scenario {
            Scenario::Normal100 => WorkloadSource::new(
                crate::workload::WorkloadKind::Constant { rate: NORMAL_LOAD_QPS },
                self.workload.weights.weights(n),
            )?,
            Scenario::High300 => WorkloadSource::new(
                crate::workload::WorkloadKind::Constant { rate: HIGH_LOAD_QPS },
                self.workload.weights.weights(n),
            )?,
            Scenario::Trace(path) => WorkloadSource::from_trace(&load_trace(path, n)?, n)?,
        };
        source.with_jitter(self.workload.jitter)
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
