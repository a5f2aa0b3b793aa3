use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moments for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first_moment: Gradients,
    pub second_moment: Gradients,
    pub timestep: u64,
}

impl AdamState {
    pub fn new(net: &Mlp, config: AdamConfig) -> Self {
        Self {
            config,
            first_moment: Gradients::zeros_like(net),
            second_moment: Gradients::zeros_like(net),
            timestep: 0,
        }
    }

    /// One bias-corrected Adam update of `net` along `-grads`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != self.first_moment.layers.len()
            || grads
                .layers
                .iter()
                .zip(&self.first_moment.layers)
                .any(|(g, m)| g.weights.dim() != m.weights.dim() || g.bias.dim() != m.bias.dim())
        {
            return Err(Error::Contract("gradient shapes do not match optimizer state".into()));
        }
        for (i, g) in grads.layers.iter().enumerate() {
            if g.weights.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient layer{i}.weights")));
            }
            if g.bias.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient layer{i}.bias")));
            }
        }

        self.timestep += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let c1 = 1.0 - b1.powi(self.timestep as i32);
        let c2 = 1.0 - b2.powi(self.timestep as i32);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (((layer, g), m), v) in net
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.first_moment.layers)
            .zip(&mut self.second_moment.layers)
        {
            Zip::from(&mut layer.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .and(&g.weights)
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut layer.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        net.check_finite()
    }
}
