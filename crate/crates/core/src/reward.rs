//! Multi-objective step reward and per-episode evaluation metrics.
//!
//! The step reward is a weighted sum of four terms:
//!
//! * latency penalty: excess over the SLO target, in units of the target
//!   (raw milliseconds behind [`LatencyPenaltyMode::RawMs`]);
//! * resource waste: unused fraction of each CPU and memory allocation;
//! * SLO satisfaction: count of services at or under the target;
//! * migration cost: allocation change in unit-box coordinates.

use serde::{Deserialize, Serialize};

use crate::domain::{ActionVector, RawServiceMetrics, CPU_MAX, CPU_MIN, MEM_MAX, MEM_MIN};
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub mu: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.1,
            lambda: 0.2,
            mu: 0.1,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lambda", self.lambda),
            ("mu", self.mu),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::validation(
                    format!("reward.{name}"),
                    "must be finite and >= 0",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyPenaltyMode {
    /// Excess divided by the target.
    #[default]
    SloUnits,
    /// Excess in milliseconds, unscaled.
    RawMs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub weights: RewardWeights,
    pub latency_penalty: LatencyPenaltyMode,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            weights: RewardWeights::default(),
            latency_penalty: LatencyPenaltyMode::SloUnits,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_latency: f64,
    pub r_waste: f64,
    pub r_slo: f64,
    pub r_migration: f64,
    pub total: f64,
}

pub fn latency_penalty(latency: &[f64], l_target: f64, mode: LatencyPenaltyMode) -> f64 {
    let excess: f64 = latency.iter().map(|&l| (l - l_target).max(0.0)).sum();
    match mode {
        LatencyPenaltyMode::SloUnits => -excess / l_target,
        LatencyPenaltyMode::RawMs => -excess,
    }
}

/// Unused fraction of each allocation, summed over CPU and memory and negated.
pub fn resource_waste(alloc: &ActionVector, cpu_used: &[f64], mem_used: &[f64]) -> Result<f64> {
    check_len("cpu usage", alloc.n_services(), cpu_used.len())?;
    check_len("mem usage", alloc.n_services(), mem_used.len())?;
    let idle = |a: f64, u: f64| ((a - u.min(a)) / a).clamp(0.0, 1.0);
    let waste: f64 = (0..alloc.n_services())
        .map(|i| idle(alloc.cpu()[i], cpu_used[i]) + idle(alloc.mem()[i], mem_used[i]))
        .sum();
    Ok(-waste)
}

pub fn slo_satisfaction(latency: &[f64], l_target: f64) -> f64 {
    latency.iter().filter(|&&l| l <= l_target).count() as f64
}

pub fn migration_cost(action: &ActionVector, prev: &ActionVector) -> Result<f64> {
    check_len("previous action", action.n_services(), prev.n_services())?;
    let cpu: f64 = action
        .cpu()
        .iter()
        .zip(prev.cpu())
        .map(|(a, b)| (a - b).abs() / (CPU_MAX - CPU_MIN))
        .sum();
    let mem: f64 = action
        .mem()
        .iter()
        .zip(prev.mem())
        .map(|(a, b)| (a - b).abs() / (MEM_MAX - MEM_MIN))
        .sum();
    Ok(-(cpu + mem))
}

/// Everything the step reward looks at.
#[derive(Debug, Clone, Copy)]
pub struct RewardInputs<'a> {
    pub latency: &'a [f64],
    pub l_target: f64,
    pub alloc: &'a ActionVector,
    pub prev_alloc: &'a ActionVector,
    pub cpu_used: &'a [f64],
    pub mem_used: &'a [f64],
}

pub fn total_reward(inputs: &RewardInputs<'_>, config: &RewardConfig) -> Result<RewardBreakdown> {
    check_len("latency", inputs.alloc.n_services(), inputs.latency.len())?;
    let w = &config.weights;
    let r_latency = latency_penalty(inputs.latency, inputs.l_target, config.latency_penalty);
    let r_waste = resource_waste(inputs.alloc, inputs.cpu_used, inputs.mem_used)?;
    let r_slo = slo_satisfaction(inputs.latency, inputs.l_target);
    let r_migration = migration_cost(inputs.alloc, inputs.prev_alloc)?;
    let total = w.alpha * r_latency + w.beta * r_waste + w.lambda * r_slo + w.mu * r_migration;
    Ok(RewardBreakdown {
        r_latency,
        r_waste,
        r_slo,
        r_migration,
        total,
    })
}

/// One step of an episode as seen by the metrics.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub raw: Vec<RawServiceMetrics>,
    pub reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub mean_latency_ms: f64,
    pub resource_efficiency: f64,
    pub slo_violation_rate: f64,
    pub total_reward: f64,
}

pub fn episode_metrics(trajectory: &[StepRecord], l_target: f64) -> Result<EpisodeSummary> {
    if trajectory.is_empty() {
        return Err(Error::validation("trajectory", "empty trajectory"));
    }
    let steps = trajectory.len() as f64;
    let mut latency_sum = 0.0;
    let mut efficiency_sum = 0.0;
    let mut violations = 0usize;
    let mut total_reward = 0.0;
    for (t, rec) in trajectory.iter().enumerate() {
        if rec.raw.is_empty() {
            return Err(Error::validation(format!("trajectory[{t}]"), "no services"));
        }
        let n = rec.raw.len() as f64;
        let step_latency = rec.raw.iter().map(|m| m.latency_ms).sum::<f64>() / n;
        let step_efficiency = rec
            .raw
            .iter()
            .map(|m| (m.cpu_util() + m.mem_util()) / 2.0)
            .sum::<f64>()
            / n;
        latency_sum += step_latency;
        efficiency_sum += step_efficiency;
        if step_latency > l_target {
            violations += 1;
        }
        total_reward += rec.reward;
    }
    Ok(EpisodeSummary {
        mean_latency_ms: latency_sum / steps,
        resource_efficiency: efficiency_sum / steps,
        slo_violation_rate: violations as f64 / steps,
        total_reward,
    })
}
