//! Training and evaluation loops and their on-disk artifacts.
//!
//! A run directory looks like:
//!
//! ```text
//! <output_dir>/
//!   config.toml        resolved config
//!   manifest.toml      run-level manifest
//!   metrics.csv        all seeds, seed-major
//!   seed_<s>/
//!     metrics.csv
//!     policy.params    absent for basek
//!     manifest.toml
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::metrics::{export_csv, EpisodeMetrics};
use crate::agents::{ActorCriticAgent, Agent, Algorithm, BaseKScheduler, DqnAgent, Observation, UpdateCounters};
use crate::domain::{ActionVector, RawServiceMetrics, StateVector, Transition};
use crate::error::{Error, Result};
use crate::nn::{load_params_matching, save_params};
use crate::reward::{episode_metrics, total_reward, RewardBreakdown, RewardConfig, RewardInputs, StepRecord};
use crate::rng::episode_seed;
use crate::sim::Simulator;

/// Simulator plus reward: the environment an agent interacts with.
pub struct ClusterEnv {
    sim: Simulator,
    reward: RewardConfig,
}

#[derive(Debug, Clone)]
pub struct EnvStep {
    pub obs: StateVector,
    pub raw: Vec<RawServiceMetrics>,
    pub reward: RewardBreakdown,
    pub done: bool,
}

impl ClusterEnv {
    pub fn new(config: &ExperimentConfig, seed: u64) -> Result<Self> {
        Ok(Self {
            sim: Simulator::new(config.sim_config(seed), config.workload_source()?)?,
            reward: config.reward,
        })
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    pub fn reset(&mut self, seed: u64) -> Result<(StateVector, Vec<RawServiceMetrics>)> {
        let obs = self.sim.reset(seed)?;
        Ok((obs, self.sim.state().raw_metrics()))
    }

    pub fn step(&mut self, action: &ActionVector) -> Result<EnvStep> {
        let out = self.sim.step(action)?;
        let s = self.sim.state();
        let reward = total_reward(
            &RewardInputs {
                latency: &s.latency,
                l_target: self.sim.config().l_target_ms,
                alloc: &s.alloc,
                prev_alloc: &s.prev_alloc,
                cpu_used: &s.cpu_used,
                mem_used: &s.mem_used,
            },
            &self.reward,
        )?;
        Ok(EnvStep {
            obs: out.obs,
            raw: out.raw,
            reward,
            done: out.done,
        })
    }
}

pub fn build_agent(config: &ExperimentConfig, seed: u64) -> Result<Box<dyn Agent>> {
    let n = config.n_services();
    Ok(match config.algorithm {
        Algorithm::Td3 => Box::new(ActorCriticAgent::td3(n, config.td3.clone(), seed)?),
        Algorithm::Ddpg => Box::new(ActorCriticAgent::ddpg(n, config.td3.clone(), seed)?),
        Algorithm::Dqn => Box::new(DqnAgent::new(n, config.dqn.clone(), seed)?),
        Algorithm::Basek => Box::new(BaseKScheduler::new(
            config.sim_config(seed).initial_allocation(),
            config.basek,
        )),
    })
}

/// Whether the agent learns and explores during the episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Evaluate,
}

/// Runs one episode and returns its metrics. `global_step` is advanced by
/// the number of environment steps taken.
pub fn run_episode(
    env: &mut ClusterEnv,
    agent: &mut dyn Agent,
    env_seed: u64,
    max_steps: u64,
    mode: Mode,
    global_step: &mut u64,
) -> Result<crate::reward::EpisodeSummary> {
    let (mut obs, mut raw) = env.reset(env_seed)?;
    let mut trajectory = Vec::with_capacity(max_steps as usize);
    for _ in 0..max_steps {
        let view = Observation {
            state: &obs,
            raw: &raw,
            global_step: *global_step,
        };
        let action = agent.act(&view, mode == Mode::Train)?;
        let step = env.step(&action)?;
        if mode == Mode::Train {
            agent.observe(Transition::new(
                obs,
                action,
                step.reward.total,
                step.obs.clone(),
                step.done,
            )?)?;
            agent.train_step()?;
        }
        *global_step += 1;
        trajectory.push(StepRecord {
            raw: step.raw.clone(),
            reward: step.reward.total,
        });
        obs = step.obs;
        raw = step.raw;
        if step.done {
            break;
        }
    }
    episode_metrics(&trajectory, env.sim.config().l_target_ms)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedManifest {
    pub status: String,
    pub error: Option<String>,
    pub algorithm: Algorithm,
    pub scenario: String,
    pub seed: u64,
    pub config_hash: String,
    pub crate_version: String,
    pub episodes_completed: u64,
    pub env_steps: u64,
    pub critic_updates: u64,
    pub actor_updates: u64,
    pub target_updates: u64,
    pub policy_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub status: String,
    pub algorithm: Algorithm,
    pub scenario: String,
    pub seeds: Vec<u64>,
    pub episodes: u64,
    pub steps_per_episode: u64,
    pub config_hash: String,
    pub crate_version: String,
}

impl RunManifest {
    pub fn load(run_dir: impl AsRef<Path>) -> Result<Self> {
        let path = run_dir.as_ref().join("manifest.toml");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
    }
}

#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: u64,
    pub metrics: Vec<EpisodeMetrics>,
    pub env_steps: u64,
    pub counters: UpdateCounters,
    pub policy_path: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainingReport {
    pub output_dir: PathBuf,
    pub seeds: Vec<SeedResult>,
}

impl TrainingReport {
    pub fn all_metrics(&self) -> Vec<EpisodeMetrics> {
        self.seeds.iter().flat_map(|s| s.metrics.iter().copied()).collect()
    }
}

fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).expect("manifest serializes");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn seed_dir(output_dir: &Path, seed: u64) -> PathBuf {
    output_dir.join(format!("seed_{seed}"))
}

/// Trains one seed, writing its artifacts under `dir`.
pub fn train_seed(config: &ExperimentConfig, seed: u64, dir: &Path) -> Result<SeedResult> {
    create_dir(dir)?;
    let mut manifest = SeedManifest {
        status: "running".into(),
        error: None,
        algorithm: config.algorithm,
        scenario: config.scenario.to_string(),
        seed,
        config_hash: config.hash(),
        crate_version: env!("CARGO_PKG_VERSION").into(),
        episodes_completed: 0,
        env_steps: 0,
        critic_updates: 0,
        actor_updates: 0,
        target_updates: 0,
        policy_file: None,
    };
    let mut env = ClusterEnv::new(config, seed)?;
    let mut agent = build_agent(config, seed)?;
    let mut metrics = Vec::with_capacity(config.episodes as usize);
    let mut global_step = 0u64;
    let outcome = (|| -> Result<()> {
        for episode in 0..config.episodes {
            let started = Instant::now();
            let summary = run_episode(
                &mut env,
                agent.as_mut(),
                episode_seed(seed, episode),
                config.steps_per_episode,
                Mode::Train,
                &mut global_step,
            )?;
            let wall = if config.record_wall_time {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            };
            metrics.push(EpisodeMetrics::new(episode, seed, summary, wall));
        }
        Ok(())
    })();

    export_csv(&metrics, dir.join("metrics.csv"))?;
    let counters = agent.counters();
    manifest.episodes_completed = metrics.len() as u64;
    manifest.env_steps = global_step;
    manifest.critic_updates = counters.critic_updates;
    manifest.actor_updates = counters.actor_updates;
    manifest.target_updates = counters.target_updates;
    let mut policy_path = None;
    match &outcome {
        Ok(()) => {
            if let Some(net) = agent.policy() {
                let p = dir.join("policy.params");
                save_params(net, &p)?;
                manifest.policy_file = Some("policy.params".into());
                policy_path = Some(p);
            }
            manifest.status = "complete".into();
        }
        Err(e) => {
            manifest.status = "failed".into();
            manifest.error = Some(e.to_string());
        }
    }
    write_toml(&dir.join("manifest.toml"), &manifest)?;
    outcome?;
    Ok(SeedResult {
        seed,
        metrics,
        env_steps: global_step,
        counters,
        policy_path,
    })
}

/// Trains every configured seed in turn and writes the run directory.
pub fn run_training(config: &ExperimentConfig) -> Result<TrainingReport> {
    config.validate()?;
    let out = &config.output_dir;
    create_dir(out)?;
    fs::write(out.join("config.toml"), config.to_toml_string())
        .map_err(|e| Error::io(out.join("config.toml"), e))?;
    let mut manifest = RunManifest {
        status: "running".into(),
        algorithm: config.algorithm,
        scenario: config.scenario.to_string(),
        seeds: config.seeds.clone(),
        episodes: config.episodes,
        steps_per_episode: config.steps_per_episode,
        config_hash: config.hash(),
        crate_version: env!("CARGO_PKG_VERSION").into(),
    };
    write_toml(&out.join("manifest.toml"), &manifest)?;
    let mut seeds = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        match train_seed(config, seed, &seed_dir(out, seed)) {
            Ok(r) => seeds.push(r),
            Err(e) => {
                manifest.status = "failed".into();
                write_toml(&out.join("manifest.toml"), &manifest)?;
                return Err(e);
            }
        }
    }
    let report = TrainingReport {
        output_dir: out.clone(),
        seeds,
    };
    export_csv(&report.all_metrics(), out.join("metrics.csv"))?;
    manifest.status = "complete".into();
    write_toml(&out.join("manifest.toml"), &manifest)?;
    Ok(report)
}

/// Greedy rollouts of a saved policy. No learning and no buffer writes.
/// `params` may be omitted only for basek.
pub fn run_evaluation(
    config: &ExperimentConfig,
    params: Option<&Path>,
    episodes: u64,
    seed: u64,
) -> Result<Vec<EpisodeMetrics>> {
    config.validate()?;
    let mut agent = build_agent(config, seed)?;
    let current = agent.policy().cloned();
    match (params, current) {
        (Some(path), Some(like)) => {
            let net = load_params_matching(path, &like)?;
            agent.load_policy(net)?;
        }
        (None, Some(_)) => {
            return Err(Error::validation(
                "params",
                format!("{} evaluation needs a parameter file", config.algorithm),
            ))
        }
        (Some(_), None) => {
            return Err(Error::validation(
                "params",
                format!("{} has no parameters to load", config.algorithm),
            ))
        }
        (None, None) => {}
    }
    let mut env = ClusterEnv::new(config, seed)?;
    let mut global_step = 0;
    (0..episodes)
        .map(|episode| {
            let started = Instant::now();
            let summary = run_episode(
                &mut env,
                agent.as_mut(),
                episode_seed(seed, episode),
                config.steps_per_episode,
                Mode::Evaluate,
                &mut global_step,
            )?;
            let wall = if config.record_wall_time {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            };
            Ok(EpisodeMetrics::new(episode, seed, summary, wall))
        })
        .collect()
}
