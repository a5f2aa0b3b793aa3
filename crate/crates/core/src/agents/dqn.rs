//! Discrete-level Q-learning baseline with one factored output head per
//! action dimension.
//!
//! The network maps a state to `2N` heads of `levels` values each. Head `h`
//! for `h < N` picks service `h`'s CPU level; head `N + i` picks service `i`'s
//! memory level. Each head is trained against its own max-backup target.

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_policy_shape, Agent, Algorithm, Observation, TrainStats, UpdateCounters};
use crate::domain::{ActionVector, StateVector, Transition, CPU_MAX, CPU_MIN, MEM_MAX, MEM_MIN};
use crate::error::{Error, Result};
use crate::nn::{Activation, AdamConfig, AdamState, Batch, Mlp, ReplayBuffer};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DqnHyper {
    pub gamma: f64,
    pub levels: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: u64,
    pub target_sync_every: u64,
    pub batch_size: usize,
    pub hidden_width: usize,
    pub buffer_capacity: usize,
    pub optimizer: AdamConfig,
}

impl Default for DqnHyper {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            levels: 10,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 500,
            target_sync_every: 100,
            batch_size: 64,
            hidden_width: 256,
            buffer_capacity: crate::nn::replay::DEFAULT_CAPACITY,
            optimizer: AdamConfig::default(),
        }
    }
}

impl DqnHyper {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::validation("gamma", "must lie in [0, 1]"));
        }
        if self.levels < 2 {
            return Err(Error::validation("levels", "must be >= 2"));
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return Err(Error::validation("epsilon_start/epsilon_end", "must lie in [0, 1]"));
        }
        if self.target_sync_every < 1 || self.batch_size < 1 || self.hidden_width < 1 {
            return Err(Error::validation(
                "target_sync_every/batch_size/hidden_width",
                "must be >= 1",
            ));
        }
        Ok(())
    }

    /// Linear decay from `epsilon_start` to `epsilon_end` over
    /// `epsilon_decay_steps` global steps, flat afterwards.
    pub fn epsilon(&self, t: u64) -> f64 {
        if self.epsilon_decay_steps == 0 || t >= self.epsilon_decay_steps {
            return self.epsilon_end;
        }
        let frac = t as f64 / self.epsilon_decay_steps as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Value of grid level `k` out of `levels` evenly spaced points on `[lo, hi]`.
pub fn level_value(k: usize, levels: usize, lo: f64, hi: f64) -> f64 {
    lo + k as f64 * (hi - lo) / (levels - 1) as f64
}

fn nearest_level(v: f64, levels: usize, lo: f64, hi: f64) -> usize {
    let k = ((v - lo) / (hi - lo) * (levels - 1) as f64).round();
    (k.max(0.0) as usize).min(levels - 1)
}

fn argmax(xs: impl Iterator<Item = f64>) -> (usize, f64) {
    xs.enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, x)| if x > best.1 { (i, x) } else { best })
}

pub struct DqnAgent {
    hyper: DqnHyper,
    n_services: usize,
    q_net: Mlp,
    target_net: Mlp,
    opt: AdamState,
    buffer: ReplayBuffer,
    explore_rng: ChaCha8Rng,
    sample_rng: ChaCha8Rng,
    counters: UpdateCounters,
}

impl DqnAgent {
    pub fn new(n_services: usize, hyper: DqnHyper, seed: u64) -> Result<Self> {
        hyper.validate()?;
        if n_services == 0 {
            return Err(Error::validation("n_services", "must be > 0"));
        }
        let mut init = stream(seed, Stream::Init);
        let h = hyper.hidden_width;
        let q_net = Mlp::new(
            &[4 * n_services, h, h, 2 * n_services * hyper.levels],
            Activation::Relu,
            Activation::Linear,
            3e-3,
            &mut init,
        )?;
        Ok(Self {
            target_net: q_net.clone(),
            opt: AdamState::new(&q_net, hyper.optimizer),
            buffer: ReplayBuffer::new(hyper.buffer_capacity)?,
            explore_rng: stream(seed, Stream::Exploration),
            sample_rng: stream(seed, Stream::Sampling),
            counters: UpdateCounters::default(),
            n_services,
            q_net,
            hyper,
        })
    }

    pub fn hyper(&self) -> &DqnHyper {
        &self.hyper
    }

    pub fn heads(&self) -> usize {
        2 * self.n_services
    }

    pub fn q_net(&self) -> &Mlp {
        &self.q_net
    }

    pub fn target_net(&self) -> &Mlp {
        &self.target_net
    }

    /// Allocation for a vector of per-head levels (CPU heads first).
    pub fn action_from_levels(&self, levels: &[usize]) -> Result<ActionVector> {
        let n = self.n_services;
        if levels.len() != 2 * n {
            return Err(Error::Dimension {
                what: "dqn levels",
                expected: 2 * n,
                got: levels.len(),
            });
        }
        let l = self.hyper.levels;
        ActionVector::new(
            levels[..n].iter().map(|&k| level_value(k, l, CPU_MIN, CPU_MAX)).collect(),
            levels[n..].iter().map(|&k| level_value(k, l, MEM_MIN, MEM_MAX)).collect(),
        )
    }

    pub fn levels_from_action(&self, action: &ActionVector) -> Vec<usize> {
        let l = self.hyper.levels;
        action
            .cpu()
            .iter()
            .map(|&c| nearest_level(c, l, CPU_MIN, CPU_MAX))
            .chain(action.mem().iter().map(|&m| nearest_level(m, l, MEM_MIN, MEM_MAX)))
            .collect()
    }

    pub fn greedy_levels(&self, state: &StateVector) -> Result<Vec<usize>> {
        let q = self.q_net.predict_one(state.as_slice())?;
        Ok(q.chunks(self.hyper.levels).map(|head| argmax(head.iter().copied()).0).collect())
    }

    /// Per-head epsilon-greedy levels at global step `t`.
    pub fn select_levels(&mut self, state: &StateVector, t: u64, explore: bool) -> Result<Vec<usize>> {
        let mut levels = self.greedy_levels(state)?;
        if explore {
            let eps = self.hyper.epsilon(t);
            for k in levels.iter_mut() {
                if self.explore_rng.random_bool(eps) {
                    *k = self.explore_rng.random_range(0..self.hyper.levels);
                }
            }
        }
        Ok(levels)
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        self.buffer.push(t)
    }

    pub fn train_step(&mut self) -> Result<TrainStats> {
        if self.buffer.len() <= self.hyper.batch_size {
            return Ok(TrainStats {
                skipped: true,
                ..Default::default()
            });
        }
        let sample = self.buffer.sample(self.hyper.batch_size, &mut self.sample_rng)?;
        let chosen: Vec<Vec<usize>> = sample.iter().map(|t| self.levels_from_action(&t.action)).collect();
        let batch = Batch::from_transitions(&sample);
        self.train_on_batch(&batch, &chosen)
    }

    /// One regression step. `chosen[i][h]` is the level head `h` took in row `i`.
    pub fn train_on_batch(&mut self, batch: &Batch, chosen: &[Vec<usize>]) -> Result<TrainStats> {
        let (levels, heads, b) = (self.hyper.levels, self.heads(), batch.len());
        let next_q = self.target_net.predict(batch.next_states.view())?;
        let (q, cache) = self.q_net.forward(batch.states.view())?;
        let mut grad = Array2::zeros(q.dim());
        let norm = (b * heads) as f64;
        let mut loss = 0.0;
        for (i, (row, next_row)) in q.axis_iter(Axis(0)).zip(next_q.axis_iter(Axis(0))).enumerate() {
            let cont = 1.0 - batch.dones[i];
            for h in 0..heads {
                let best_next = argmax(next_row.iter().skip(h * levels).take(levels).copied()).1;
                let y = batch.rewards[i] + self.hyper.gamma * best_next * cont;
                let col = h * levels + chosen[i][h];
                let err = row[col] - y;
                loss += err * err / norm;
                grad[[i, col]] = 2.0 * err / norm;
            }
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("dqn loss".into()));
        }
        let (grads, _) = self.q_net.backward(&cache, grad.view())?;
        self.opt.step(&mut self.q_net, &grads)?;
        self.counters.critic_updates += 1;
        let synced = self.counters.critic_updates % self.hyper.target_sync_every == 0;
        if synced {
            self.target_net = self.q_net.clone();
            self.counters.target_updates += 1;
        }
        Ok(TrainStats {
            critic_losses: vec![loss],
            targets_updated: synced,
            ..Default::default()
        })
    }
}

impl Agent for DqnAgent {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Dqn
    }

    fn act(&mut self, obs: &Observation<'_>, explore: bool) -> Result<ActionVector> {
        let levels = self.select_levels(obs.state, obs.global_step, explore)?;
        self.action_from_levels(&levels)
    }

    fn observe(&mut self, transition: Transition) -> Result<()> {
        self.push(transition)
    }

    fn train_step(&mut self) -> Result<TrainStats> {
        DqnAgent::train_step(self)
    }

    fn policy(&self) -> Option<&Mlp> {
        Some(&self.q_net)
    }

    fn load_policy(&mut self, net: Mlp) -> Result<()> {
        check_policy_shape(&self.q_net, &net)?;
        self.target_net = net.clone();
        self.opt = AdamState::new(&net, self.hyper.optimizer);
        self.q_net = net;
        Ok(())
    }

    fn counters(&self) -> UpdateCounters {
        self.counters
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DqnHyper {
        DqnHyper {
            hidden_width: 16,
            batch_size: 8,
            target_sync_every: 3,
            ..Default::default()
        }
    }

    #[test]
    fn grid_values() {
        assert_eq!(level_value(0, 10, CPU_MIN, CPU_MAX), 0.1);
        assert!((level_value(9, 10, CPU_MIN, CPU_MAX) - 2.0).abs() < 1e-12);
        assert!((level_value(3, 10, CPU_MIN, CPU_MAX) - (0.1 + 3.0 * 1.9 / 9.0)).abs() < 1e-12);
        assert!((level_value(3, 10, CPU_MIN, CPU_MAX) - 0.733_333_333).abs() < 1e-8);
        assert_eq!(level_value(9, 10, MEM_MIN, MEM_MAX), 2048.0);
    }

    #[test]
    fn levels_round_trip_through_actions() {
        let agent = DqnAgent::new(2, small(), 0).unwrap();
        let levels = vec![0, 3, 9, 5];
        let a = agent.action_from_levels(&levels).unwrap();
        assert_eq!(agent.levels_from_action(&a), levels);
    }

    #[test]
    fn epsilon_schedule() {
        let h = DqnHyper::default();
        assert_eq!(h.epsilon(0), 1.0);
        assert!((h.epsilon(250) - 0.525).abs() < 1e-12);
        assert_eq!(h.epsilon(500), 0.05);
        assert_eq!(h.epsilon(10_000), 0.05);
    }

    #[test]
    fn full_epsilon_is_uniform_per_head() {
        let mut agent = DqnAgent::new(1, small(), 5).unwrap();
        let s = StateVector::from_flat(vec![0.5; 4]).unwrap();
        let mut counts = [[0usize; 10]; 2];
        let draws = 20_000;
        for _ in 0..draws {
            let l = agent.select_levels(&s, 0, true).unwrap();
            counts[0][l[0]] += 1;
            counts[1][l[1]] += 1;
        }
        // chi-square with 9 dof; 27.88 is the 0.999 quantile
        let expected = draws as f64 / 10.0;
        for head in counts {
            let chi2: f64 = head.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
            assert!(chi2 < 27.88, "chi2 {chi2}, counts {head:?}");
        }
    }

    #[test]
    fn hard_sync_cadence() {
        let mut agent = DqnAgent::new(1, small(), 1).unwrap();
        let s = StateVector::from_flat(vec![0.2; 4]).unwrap();
        for k in 0..20 {
            let a = agent.action_from_levels(&[k % 10, (k * 3) % 10]).unwrap();
            agent.push(Transition::new(s.clone(), a, 1.0, s.clone(), k % 2 == 0).unwrap()).unwrap();
        }
        let stats: Vec<_> = (0..6).map(|_| agent.train_step().unwrap()).collect();
        let synced: Vec<bool> = stats.iter().map(|s| s.targets_updated).collect();
        assert_eq!(synced, [false, false, true, false, false, true]);
        assert_eq!(agent.target_net, agent.q_net);
    }
}
