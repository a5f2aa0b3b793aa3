//! Fluid-flow cluster simulator.
//!
//! Each step is one decision window. Per-service latency follows a
//! single-server queueing curve `(base + network) / (1 - rho)`, capped at a
//! saturation value, and doubled (by default) when the memory allocation
//! falls short of demand.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{
    default_nodes, default_services, normalize_state, ActionVector, NodeSpec,
    NormalizationConfig, RawServiceMetrics, ServiceSpec, StateVector,
};
use crate::error::{check_len, Error, Result};
use crate::rng::{derived_seed, stream, Stream};
use crate::workload::WorkloadSource;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatencyModel {
    pub base_service_ms: f64,
    pub saturation_cap_ms: f64,
    pub mem_pressure_multiplier: f64,
    pub rho_cap: f64,
    /// Relative std-dev of multiplicative latency measurement noise.
    pub jitter_sigma: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            base_service_ms: 20.0,
            saturation_cap_ms: 1000.0,
            mem_pressure_multiplier: 2.0,
            rho_cap: 0.99,
            jitter_sigma: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub services: Vec<ServiceSpec>,
    pub nodes: Vec<NodeSpec>,
    pub l_target_ms: f64,
    pub episode_len: u64,
    pub step_duration_s: f64,
    pub latency: LatencyModel,
    pub normalization: NormalizationConfig,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            services: default_services(),
            nodes: default_nodes(),
            l_target_ms: 150.0,
            episode_len: 20,
            step_duration_s: 30.0,
            latency: LatencyModel::default(),
            normalization: NormalizationConfig::default(),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn n_services(&self) -> usize {
        self.services.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.services.is_empty() {
            return Err(Error::validation("sim.services", "at least one service required"));
        }
        if self.episode_len < 1 {
            return Err(Error::validation("sim.episode_len", "must be >= 1"));
        }
        if !(self.l_target_ms > 0.0) || !self.l_target_ms.is_finite() {
            return Err(Error::validation("sim.l_target_ms", "must be finite and > 0"));
        }
        if !(self.step_duration_s > 0.0) {
            return Err(Error::validation("sim.step_duration_s", "must be > 0"));
        }
        let lat = &self.latency;
        if !(lat.base_service_ms >= 0.0) {
            return Err(Error::validation("sim.latency.base_service_ms", "must be >= 0"));
        }
        if !(lat.rho_cap > 0.0 && lat.rho_cap < 1.0) {
            return Err(Error::validation("sim.latency.rho_cap", "must lie in (0, 1)"));
        }
        if !(lat.mem_pressure_multiplier >= 1.0) {
            return Err(Error::validation(
                "sim.latency.mem_pressure_multiplier",
                "must be >= 1",
            ));
        }
        if !(lat.jitter_sigma >= 0.0) {
            return Err(Error::validation("sim.latency.jitter_sigma", "must be >= 0"));
        }
        self.normalization.validate()?;
        for (i, node) in self.nodes.iter().enumerate() {
            if node.node_id != i {
                return Err(Error::validation(
                    format!("nodes[{i}].node_id"),
                    "node ids must equal their position",
                ));
            }
            node.validate()?;
        }
        for (i, svc) in self.services.iter().enumerate() {
            if svc.service_id != i {
                return Err(Error::validation(
                    format!("services[{i}].service_id"),
                    "service ids must equal their position",
                ));
            }
            svc.validate()?;
            let node = self.nodes.get(svc.home_node).ok_or_else(|| {
                Error::validation(
                    format!("services[{i}].home_node"),
                    format!("node {} does not exist", svc.home_node),
                )
            })?;
            let base = lat.base_service_ms + network_ms(node);
            if !(lat.saturation_cap_ms >= base) {
                return Err(Error::validation(
                    "sim.latency.saturation_cap_ms",
                    format!("must be >= idle latency {base} of service {i}"),
                ));
            }
        }
        Ok(())
    }

    pub fn initial_allocation(&self) -> ActionVector {
        ActionVector::new(
            self.services.iter().map(|s| s.initial_cpu_request).collect(),
            self.services.iter().map(|s| s.initial_mem_request).collect(),
        )
        .expect("equal block lengths")
    }

    /// Idle latency of service `i`: service time plus its node's network hop.
    pub fn idle_latency_ms(&self, i: usize) -> f64 {
        self.latency.base_service_ms + network_ms(&self.nodes[self.services[i].home_node])
    }
}

pub fn network_ms(node: &NodeSpec) -> f64 {
    node.base_network_latency_ms
}

/// Noise-free outcome for one service in one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceOutcome {
    pub cpu_used: f64,
    pub mem_used: f64,
    pub rho: f64,
    pub latency_ms: f64,
    pub mem_pressure: bool,
}

pub fn service_dynamics(
    spec: &ServiceSpec,
    node: &NodeSpec,
    model: &LatencyModel,
    cpu_alloc: f64,
    mem_alloc: f64,
    qps: f64,
) -> ServiceOutcome {
    let demand = qps * spec.cpu_cost_per_request;
    let rho = (demand / cpu_alloc).min(model.rho_cap);
    let idle = model.base_service_ms + network_ms(node);
    let mut latency = (idle / (1.0 - rho)).min(model.saturation_cap_ms);
    let mem_demand = spec.mem_floor + spec.mem_per_qps * qps;
    let mem_pressure = mem_alloc < mem_demand;
    if mem_pressure {
        latency = (latency * model.mem_pressure_multiplier).min(model.saturation_cap_ms);
    }
    ServiceOutcome {
        cpu_used: demand.min(cpu_alloc),
        mem_used: mem_demand.min(mem_alloc),
        rho,
        latency_ms: latency,
        mem_pressure,
    }
}

/// Scales allocations down on any node whose capacity they exceed.
pub fn enforce_node_capacity(config: &SimConfig, action: &ActionVector) -> ActionVector {
    let mut cpu = action.cpu().to_vec();
    let mut mem = action.mem().to_vec();
    for node in &config.nodes {
        let members: Vec<usize> = config
            .services
            .iter()
            .filter(|s| s.home_node == node.node_id)
            .map(|s| s.service_id)
            .collect();
        let cpu_sum: f64 = members.iter().map(|&i| cpu[i]).sum();
        if cpu_sum > node.cpu_capacity {
            let f = node.cpu_capacity / cpu_sum;
            members.iter().for_each(|&i| cpu[i] *= f);
        }
        let mem_sum: f64 = members.iter().map(|&i| mem[i]).sum();
        if mem_sum > node.mem_capacity {
            let f = node.mem_capacity / mem_sum;
            members.iter().for_each(|&i| mem[i] *= f);
        }
    }
    ActionVector::new(cpu, mem).expect("equal block lengths")
}

/// Raw quantities of the current window.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub step: u64,
    pub alloc: ActionVector,
    pub prev_alloc: ActionVector,
    pub qps: Vec<f64>,
    pub cpu_used: Vec<f64>,
    pub mem_used: Vec<f64>,
    pub latency: Vec<f64>,
}

impl SimState {
    pub fn raw_metrics(&self) -> Vec<RawServiceMetrics> {
        (0..self.qps.len())
            .map(|i| RawServiceMetrics {
                cpu_used: self.cpu_used[i],
                cpu_alloc: self.alloc.cpu()[i],
                mem_used: self.mem_used[i],
                mem_alloc: self.alloc.mem()[i],
                latency_ms: self.latency[i],
                qps: self.qps[i],
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub obs: StateVector,
    pub raw: Vec<RawServiceMetrics>,
    pub done: bool,
}

pub struct Simulator {
    config: SimConfig,
    workload: WorkloadSource,
    seed: u64,
    workload_seed: u64,
    noise: ChaCha8Rng,
    state: SimState,
    done: bool,
}

impl Simulator {
    /// Builds a simulator and resets it with `config.seed`.
    pub fn new(config: SimConfig, workload: WorkloadSource) -> Result<Self> {
        config.validate()?;
        check_len("workload services", config.n_services(), workload.n_services())?;
        let seed = config.seed;
        let alloc = config.initial_allocation();
        let n = config.n_services();
        let mut sim = Self {
            state: SimState {
                step: 0,
                prev_alloc: alloc.clone(),
                alloc,
                qps: vec![0.0; n],
                cpu_used: vec![0.0; n],
                mem_used: vec![0.0; n],
                latency: vec![0.0; n],
            },
            config,
            workload,
            seed,
            workload_seed: derived_seed(seed, Stream::Workload),
            noise: stream(seed, Stream::EnvNoise),
            done: false,
        };
        sim.reset(seed)?;
        Ok(sim)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Starts a new episode with initial requests installed. Re-seeds every
    /// stream, so equal seeds give bitwise-equal trajectories.
    pub fn reset(&mut self, seed: u64) -> Result<StateVector> {
        self.seed = seed;
        self.workload_seed = derived_seed(seed, Stream::Workload);
        self.noise = stream(seed, Stream::EnvNoise);
        self.done = false;
        let alloc = self.config.initial_allocation();
        self.state.step = 0;
        self.state.prev_alloc = alloc.clone();
        self.apply(alloc, 0);
        self.observe()
    }

    pub fn step(&mut self, action: &ActionVector) -> Result<StepOutcome> {
        if self.done || self.state.step >= self.config.episode_len {
            return Err(Error::Contract("step called after episode end".into()));
        }
        check_len("action services", self.config.n_services(), action.n_services())?;
        let alloc = enforce_node_capacity(&self.config, action);
        self.state.prev_alloc = std::mem::replace(&mut self.state.alloc, alloc.clone());
        let next = self.state.step + 1;
        self.apply(alloc, next);
        self.done = next == self.config.episode_len;
        Ok(StepOutcome {
            obs: self.observe()?,
            raw: self.state.raw_metrics(),
            done: self.done,
        })
    }

    fn apply(&mut self, alloc: ActionVector, step: u64) {
        let qps = self.workload.qps_at(step, self.workload_seed);
        let n = self.config.n_services();
        let (mut cpu_used, mut mem_used, mut latency) =
            (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let model = self.config.latency;
        for i in 0..n {
            let svc = &self.config.services[i];
            let node = &self.config.nodes[svc.home_node];
            let out = service_dynamics(svc, node, &model, alloc.cpu()[i], alloc.mem()[i], qps[i]);
            cpu_used[i] = out.cpu_used;
            mem_used[i] = out.mem_used;
            latency[i] = out.latency_ms;
            if model.jitter_sigma > 0.0 {
                let z: f64 = StandardNormal.sample(&mut self.noise);
                let floor = self.config.idle_latency_ms(i);
                latency[i] = (latency[i] * (1.0 + model.jitter_sigma * z))
                    .clamp(floor, model.saturation_cap_ms);
            }
        }
        self.state.step = step;
        self.state.alloc = alloc;
        self.state.qps = qps;
        self.state.cpu_used = cpu_used;
        self.state.mem_used = mem_used;
        self.state.latency = latency;
    }

    fn observe(&self) -> Result<StateVector> {
        normalize_state(
            &self.state.raw_metrics(),
            self.config.l_target_ms,
            &self.config.normalization,
        )
    }
}
