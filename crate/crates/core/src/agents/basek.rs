//! Fixed-request scheduler with an optional utilization-threshold rule.

use serde::{Deserialize, Serialize};

use crate::domain::{ActionVector, RawServiceMetrics};
use crate::error::{check_len, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKMode {
    /// Always the initial requests.
    #[default]
    Static,
    /// Scale the current allocation up or down by `step` when utilization
    /// leaves the `[low, high]` band.
    Threshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaseKConfig {
    pub mode: BaseKMode,
    pub high_util: f64,
    pub low_util: f64,
    pub step: f64,
}

impl Default for BaseKConfig {
    fn default() -> Self {
        Self {
            mode: BaseKMode::Static,
            high_util: 0.8,
            low_util: 0.3,
            step: 0.2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaseKScheduler {
    config: BaseKConfig,
    initial: ActionVector,
}

impl BaseKScheduler {
    pub fn new(initial: ActionVector, config: BaseKConfig) -> Self {
        Self { config, initial }
    }

    pub fn config(&self) -> &BaseKConfig {
        &self.config
    }

    pub fn decide(&self, raw: &[RawServiceMetrics]) -> Result<ActionVector> {
        check_len("basek metrics", self.initial.n_services(), raw.len())?;
        match self.config.mode {
            BaseKMode::Static => Ok(self.initial.clone()),
            BaseKMode::Threshold => {
                let scale = |util: f64, alloc: f64| {
                    if util > self.config.high_util {
                        alloc * (1.0 + self.config.step)
                    } else if util < self.config.low_util {
                        alloc * (1.0 - self.config.step)
                    } else {
                        alloc
                    }
                };
                ActionVector::new(
                    raw.iter().map(|m| scale(m.cpu_util(), m.cpu_alloc)).collect(),
                    raw.iter().map(|m| scale(m.mem_util(), m.mem_alloc)).collect(),
                )
            }
        }
    }
}
