//! Cluster, service, state and action vocabulary.
//!
//! Observations are flattened as `[cpu_util | mem_util | latency | qps]`, each
//! block holding one entry per service. Actions are flattened as
//! `[cpu | mem]`. Both layouts are relied on by the networks in `nn` and by
//! the agents, so they are fixed here and nowhere else.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Lower bound of a per-service CPU allocation, in cores.
pub const CPU_MIN: f64 = 0.1;
/// Upper bound of a per-service CPU allocation, in cores.
pub const CPU_MAX: f64 = 2.0;
/// Lower bound of a per-service memory allocation, in MB.
pub const MEM_MIN: f64 = 64.0;
/// Upper bound of a per-service memory allocation, in MB.
pub const MEM_MAX: f64 = 2048.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Edge,
    Cloud,
}

impl Tier {
    pub fn default_cpu_capacity(self) -> f64 {
        match self {
            Tier::Edge => 2.0,
            Tier::Cloud => 8.0,
        }
    }

    pub fn default_mem_capacity(self) -> f64 {
        match self {
            Tier::Edge => 4096.0,
            Tier::Cloud => 16384.0,
        }
    }

    pub fn default_network_latency_ms(self) -> f64 {
        match self {
            Tier::Edge => 5.0,
            Tier::Cloud => 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub node_id: usize,
    pub tier: Tier,
    /// Cores.
    pub cpu_capacity: f64,
    /// Megabytes.
    pub mem_capacity: f64,
    pub base_network_latency_ms: f64,
}

impl NodeSpec {
    pub fn with_tier_defaults(node_id: usize, tier: Tier) -> Self {
        Self {
            node_id,
            tier,
            cpu_capacity: tier.default_cpu_capacity(),
            mem_capacity: tier.default_mem_capacity(),
            base_network_latency_ms: tier.default_network_latency_ms(),
        }
    }

    pub fn edge(node_id: usize) -> Self {
        Self::with_tier_defaults(node_id, Tier::Edge)
    }

    pub fn cloud(node_id: usize) -> Self {
        Self::with_tier_defaults(node_id, Tier::Cloud)
    }

    pub fn validate(&self) -> Result<()> {
        let id = self.node_id;
        if !(self.cpu_capacity > 0.0) {
            return Err(Error::validation(
                format!("nodes[{id}].cpu_capacity"),
                "must be > 0",
            ));
        }
        if !(self.mem_capacity > 0.0) {
            return Err(Error::validation(
                format!("nodes[{id}].mem_capacity"),
                "must be > 0",
            ));
        }
        if !(self.base_network_latency_ms >= 0.0) || !self.base_network_latency_ms.is_finite() {
            return Err(Error::validation(
                format!("nodes[{id}].base_network_latency_ms"),
                "must be finite and >= 0",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceSpec {
    pub service_id: usize,
    pub name: String,
    pub home_node: usize,
    /// Core-seconds consumed per request.
    pub cpu_cost_per_request: f64,
    /// Resident memory with no load, MB.
    pub mem_floor: f64,
    /// Additional MB per request/s of load.
    pub mem_per_qps: f64,
    pub initial_cpu_request: f64,
    pub initial_mem_request: f64,
}

impl ServiceSpec {
    pub fn validate(&self) -> Result<()> {
        let id = self.service_id;
        let non_negative = [
            ("cpu_cost_per_request", self.cpu_cost_per_request),
            ("mem_floor", self.mem_floor),
            ("mem_per_qps", self.mem_per_qps),
        ];
        for (field, value) in non_negative {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(Error::validation(
                    format!("services[{id}].{field}"),
                    "must be finite and >= 0",
                ));
            }
        }
        if !(CPU_MIN..=CPU_MAX).contains(&self.initial_cpu_request) {
            return Err(Error::validation(
                format!("services[{id}].initial_cpu_request"),
                format!("must lie in [{CPU_MIN}, {CPU_MAX}]"),
            ));
        }
        if !(MEM_MIN..=MEM_MAX).contains(&self.initial_mem_request) {
            return Err(Error::validation(
                format!("services[{id}].initial_mem_request"),
                format!("must lie in [{MEM_MIN}, {MEM_MAX}]"),
            ));
        }
        Ok(())
    }
}

/// The eight-node topology: nodes 0..4 are edge hosts, 4..8 are cloud hosts.
pub fn default_nodes() -> Vec<NodeSpec> {
    (0..8)
        .map(|id| {
            if id < 4 {
                NodeSpec::edge(id)
            } else {
                NodeSpec::cloud(id)
            }
        })
        .collect()
}

/// Default service roster, one service per node.
///
/// Demand figures are simulator inputs, not measurements. The front end and
/// the order pipeline are the CPU-heavy services; initial requests are the
/// modest Kubernetes-style requests a static scheduler would keep forever.
pub fn default_services() -> Vec<ServiceSpec> {
    // name, cpu cost (core-s/req), mem floor, mem per qps, initial cpu, initial mem
    const ROSTER: [(&str, f64, f64, f64, f64, f64); 8] = [
        ("frontend", 0.036, 160.0, 8.0, 0.45, 384.0),
        ("user", 0.024, 128.0, 6.0, 0.4, 256.0),
        ("cart", 0.028, 192.0, 6.0, 0.4, 384.0),
        ("catalogue", 0.02, 128.0, 4.0, 0.35, 256.0),
        ("shipping", 0.016, 96.0, 4.0, 0.3, 256.0),
        ("orders", 0.032, 192.0, 8.0, 0.45, 384.0),
        ("payment", 0.016, 96.0, 4.0, 0.3, 256.0),
        ("queue-master", 0.024, 128.0, 6.0, 0.35, 256.0),
    ];
    ROSTER
        .iter()
        .enumerate()
        .map(
            |(id, &(name, cost, floor, per_qps, cpu, mem))| ServiceSpec {
                service_id: id,
                name: name.to_string(),
                home_node: id,
                cpu_cost_per_request: cost,
                mem_floor: floor,
                mem_per_qps: per_qps,
                initial_cpu_request: cpu,
                initial_mem_request: mem,
            },
        )
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormalizationConfig {
    /// Latency divisor as a multiple of the SLO target.
    pub latency_headroom: f64,
    /// QPS divisor, requests/s.
    pub q_max: f64,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        Self {
            latency_headroom: 2.0,
            q_max: 400.0,
        }
    }
}

impl NormalizationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.latency_headroom > 0.0) || !self.latency_headroom.is_finite() {
            return Err(Error::validation(
                "normalization.latency_headroom",
                "must be finite and > 0",
            ));
        }
        if !(self.q_max > 0.0) || !self.q_max.is_finite() {
            return Err(Error::validation(
                "normalization.q_max",
                "must be finite and > 0",
            ));
        }
        Ok(())
    }
}

/// Per-service measurements for one decision window, before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawServiceMetrics {
    pub cpu_used: f64,
    pub cpu_alloc: f64,
    pub mem_used: f64,
    pub mem_alloc: f64,
    pub latency_ms: f64,
    pub qps: f64,
}

impl RawServiceMetrics {
    fn validate(&self, service: usize) -> Result<()> {
        let fields = [
            ("cpu_used", self.cpu_used),
            ("cpu_alloc", self.cpu_alloc),
            ("mem_used", self.mem_used),
            ("mem_alloc", self.mem_alloc),
            ("latency_ms", self.latency_ms),
            ("qps", self.qps),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(Error::validation(
                    format!("raw[{service}].{name}"),
                    "non-finite",
                ));
            }
            if value < 0.0 {
                return Err(Error::validation(format!("raw[{service}].{name}"), "negative"));
            }
        }
        if self.cpu_alloc <= 0.0 {
            return Err(Error::validation(
                format!("raw[{service}].cpu_alloc"),
                "must be > 0",
            ));
        }
        if self.mem_alloc <= 0.0 {
            return Err(Error::validation(
                format!("raw[{service}].mem_alloc"),
                "must be > 0",
            ));
        }
        Ok(())
    }

    pub fn cpu_util(&self) -> f64 {
        (self.cpu_used / self.cpu_alloc).clamp(0.0, 1.0)
    }

    pub fn mem_util(&self) -> f64 {
        (self.mem_used / self.mem_alloc).clamp(0.0, 1.0)
    }
}

/// Normalized observation of length `4N`, every entry in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    data: Vec<f64>,
}

impl StateVector {
    /// Builds a state from a flat `4N` buffer, clamping every entry into `[0, 1]`.
    pub fn from_flat(mut data: Vec<f64>) -> Result<Self> {
        if data.len() % 4 != 0 {
            return Err(Error::Dimension {
                what: "state vector (must be 4N)",
                expected: data.len().next_multiple_of(4),
                got: data.len(),
            });
        }
        for (i, v) in data.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("state[{i}]")));
            }
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Self { data })
    }

    pub fn n_services(&self) -> usize {
        self.data.len() / 4
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    fn block(&self, k: usize) -> &[f64] {
        let n = self.n_services();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn cpu_util(&self) -> &[f64] {
        self.block(0)
    }

    pub fn mem_util(&self) -> &[f64] {
        self.block(1)
    }

    pub fn latency_norm(&self) -> &[f64] {
        self.block(2)
    }

    pub fn qps_norm(&self) -> &[f64] {
        self.block(3)
    }
}

/// Maps raw per-service metrics to the normalized observation.
pub fn normalize_state(
    raw: &[RawServiceMetrics],
    l_target_ms: f64,
    norm: &NormalizationConfig,
) -> Result<StateVector> {
    if !(l_target_ms > 0.0) || !l_target_ms.is_finite() {
        return Err(Error::validation("l_target_ms", "must be finite and > 0"));
    }
    let n = raw.len();
    let l_max = norm.latency_headroom * l_target_ms;
    let mut data = vec![0.0; 4 * n];
    for (i, m) in raw.iter().enumerate() {
        m.validate(i)?;
        data[i] = m.cpu_util();
        data[n + i] = m.mem_util();
        data[2 * n + i] = (m.latency_ms / l_max).clamp(0.0, 1.0);
        data[3 * n + i] = (m.qps / norm.q_max).clamp(0.0, 1.0);
    }
    Ok(StateVector { data })
}

/// Per-service CPU (cores) and memory (MB) allocation, always inside the box.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionVector {
    cpu: Vec<f64>,
    mem: Vec<f64>,
}

fn clamp_finite(v: f64, lo: f64, hi: f64) -> f64 {
    if v.is_nan() {
        lo
    } else {
        v.clamp(lo, hi)
    }
}

impl ActionVector {
    /// Clamps every entry into the allocation box. NaN maps to the lower bound.
    pub fn new(cpu: Vec<f64>, mem: Vec<f64>) -> Result<Self> {
        check_len("action mem block", cpu.len(), mem.len())?;
        Ok(Self {
            cpu: cpu.into_iter().map(|c| clamp_finite(c, CPU_MIN, CPU_MAX)).collect(),
            mem: mem.into_iter().map(|m| clamp_finite(m, MEM_MIN, MEM_MAX)).collect(),
        })
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() % 2 != 0 {
            return Err(Error::Dimension {
                what: "action vector (must be 2N)",
                expected: flat.len() + 1,
                got: flat.len(),
            });
        }
        let n = flat.len() / 2;
        Self::new(flat[..n].to_vec(), flat[n..].to_vec())
    }

    /// Maps a `2N` vector in `[-1, 1]` affinely onto the box.
    pub fn from_unit(u: &[f64]) -> Result<Self> {
        if u.len() % 2 != 0 {
            return Err(Error::Dimension {
                what: "unit action (must be 2N)",
                expected: u.len() + 1,
                got: u.len(),
            });
        }
        let n = u.len() / 2;
        let lift = |x: f64, lo: f64, hi: f64| {
            let x = clamp_finite(x, -1.0, 1.0);
            lo + (x + 1.0) / 2.0 * (hi - lo)
        };
        let cpu = u[..n].iter().map(|&x| lift(x, CPU_MIN, CPU_MAX)).collect();
        let mem = u[n..].iter().map(|&x| lift(x, MEM_MIN, MEM_MAX)).collect();
        Self::new(cpu, mem)
    }

    /// Inverse of [`ActionVector::from_unit`].
    pub fn to_unit(&self) -> Vec<f64> {
        let lower = |x: f64, lo: f64, hi: f64| 2.0 * (x - lo) / (hi - lo) - 1.0;
        self.cpu
            .iter()
            .map(|&c| lower(c, CPU_MIN, CPU_MAX))
            .chain(self.mem.iter().map(|&m| lower(m, MEM_MIN, MEM_MAX)))
            .collect()
    }

    pub fn uniform(n: usize, cpu: f64, mem: f64) -> Self {
        Self::new(vec![cpu; n], vec![mem; n]).expect("equal block lengths")
    }

    pub fn n_services(&self) -> usize {
        self.cpu.len()
    }

    pub fn cpu(&self) -> &[f64] {
        &self.cpu
    }

    pub fn mem(&self) -> &[f64] {
        &self.mem
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.cpu.iter().chain(&self.mem).copied().collect()
    }
}

/// One environment interaction, as stored in the replay buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateVector,
    pub action: ActionVector,
    pub reward: f64,
    pub next_state: StateVector,
    pub done: bool,
}

impl Transition {
    pub fn new(
        state: StateVector,
        action: ActionVector,
        reward: f64,
        next_state: StateVector,
        done: bool,
    ) -> Result<Self> {
        check_len("transition next_state", state.as_slice().len(), next_state.as_slice().len())?;
        check_len("transition action", state.n_services(), action.n_services())?;
        if !reward.is_finite() {
            return Err(Error::NonFinite("transition reward".into()));
        }
        Ok(Self {
            state,
            action,
            reward,
            next_state,
            done,
        })
    }
}
