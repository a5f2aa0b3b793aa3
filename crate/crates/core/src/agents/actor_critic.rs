//! Deterministic actor-critic learners: TD3 and its single-critic DDPG
//! ancestor share one implementation.
//!
//! TD3 differs from DDPG in three switches, all carried by [`Variant`]:
//! twin critics with a min-backup, clipped Gaussian noise on target actions,
//! and actor/target updates only every `policy_freq` critic updates.
//!
//! Actions live in the unit box `[-1, 1]^{2N}` inside this module; the
//! environment-facing allocation is produced by [`ActionVector::from_unit`].

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_policy_shape, Agent, Algorithm, Observation, TrainStats, UpdateCounters};
use crate::domain::{ActionVector, StateVector, Transition};
use crate::error::{Error, Result};
use crate::nn::{soft_update, Activation, AdamConfig, AdamState, Batch, Mlp, ReplayBuffer};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Td3Hyper {
    pub gamma: f64,
    pub tau: f64,
    pub policy_freq: u64,
    pub smoothing_sigma: f64,
    pub smoothing_clip: f64,
    pub sigma_init: f64,
    pub tau_decay: f64,
    pub batch_size: usize,
    pub warmup_transitions: u64,
    pub hidden_width: usize,
    pub buffer_capacity: usize,
    pub actor_optimizer: AdamConfig,
    pub critic_optimizer: AdamConfig,
}

impl Default for Td3Hyper {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            policy_freq: 2,
            smoothing_sigma: 0.2,
            smoothing_clip: 0.5,
            sigma_init: 0.3,
            tau_decay: 1000.0,
            batch_size: 64,
            warmup_transitions: 200,
            hidden_width: 256,
            buffer_capacity: crate::nn::replay::DEFAULT_CAPACITY,
            actor_optimizer: AdamConfig::default(),
            critic_optimizer: AdamConfig::default(),
        }
    }
}

impl Td3Hyper {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::validation("gamma", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::validation("tau", "must lie in [0, 1]"));
        }
        if self.policy_freq < 1 {
            return Err(Error::validation("policy_freq", "must be >= 1"));
        }
        if !(self.smoothing_clip > 0.0) {
            return Err(Error::validation("smoothing_clip", "must be > 0"));
        }
        if !(self.smoothing_sigma >= 0.0) || !(self.sigma_init >= 0.0) {
            return Err(Error::validation("smoothing_sigma/sigma_init", "must be >= 0"));
        }
        if !(self.tau_decay > 0.0) {
            return Err(Error::validation("tau_decay", "must be > 0"));
        }
        if self.batch_size < 1 || self.hidden_width < 1 || self.buffer_capacity < 1 {
            return Err(Error::validation(
                "batch_size/hidden_width/buffer_capacity",
                "must be >= 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Td3,
    Ddpg,
}

impl Variant {
    fn critic_count(self) -> usize {
        match self {
            Variant::Td3 => 2,
            Variant::Ddpg => 1,
        }
    }
}

/// Exploration noise scale at global step `t`: `sigma_init * exp(-t / tau_decay)`.
pub fn exploration_sigma(sigma_init: f64, tau_decay: f64, t: u64) -> f64 {
    sigma_init * (-(t as f64) / tau_decay).exp()
}

/// Gaussian noise of scale `sigma`, each draw clipped to `[-clip, clip]`.
pub fn clipped_noise<R: Rng + ?Sized>(
    rng: &mut R,
    sigma: f64,
    clip: f64,
    shape: (usize, usize),
) -> Array2<f64> {
    if sigma == 0.0 {
        return Array2::zeros(shape);
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    Array2::from_shape_simple_fn(shape, || {
        let n = normal.sample(rng).clamp(-clip, clip);
        debug_assert!(n.abs() <= clip);
        n
    })
}

/// `r + gamma * min(q1, q2) * (1 - done)`; `q2 = None` for a single critic.
pub fn td_target(reward: f64, gamma: f64, q1: f64, q2: Option<f64>, done: bool) -> f64 {
    let q = q2.map_or(q1, |q2| q1.min(q2));
    reward + gamma * q * if done { 0.0 } else { 1.0 }
}

/// Bootstrapped targets for one batch, with the target-critic values that
/// produced them.
#[derive(Debug, Clone)]
pub struct TdTargets {
    pub y: Array1<f64>,
    pub next_q: Vec<Array1<f64>>,
    pub max_abs_noise: f64,
}

pub struct ActorCriticAgent {
    variant: Variant,
    hyper: Td3Hyper,
    n_services: usize,
    actor: Mlp,
    target_actor: Mlp,
    critics: Vec<Mlp>,
    target_critics: Vec<Mlp>,
    actor_opt: AdamState,
    critic_opts: Vec<AdamState>,
    buffer: ReplayBuffer,
    explore_rng: ChaCha8Rng,
    sample_rng: ChaCha8Rng,
    smoothing_rng: ChaCha8Rng,
    counters: UpdateCounters,
}

impl ActorCriticAgent {
    pub fn new(variant: Variant, n_services: usize, hyper: Td3Hyper, seed: u64) -> Result<Self> {
        hyper.validate()?;
        if n_services == 0 {
            return Err(Error::validation("n_services", "must be > 0"));
        }
        let hyper = match variant {
            Variant::Td3 => hyper,
            Variant::Ddpg => Td3Hyper {
                policy_freq: 1,
                ..hyper
            },
        };
        let mut init = stream(seed, Stream::Init);
        let (sd, ad, h) = (4 * n_services, 2 * n_services, hyper.hidden_width);
        let actor = Mlp::new(&[sd, h, h, ad], Activation::Relu, Activation::Tanh, 3e-3, &mut init)?;
        let critics = (0..variant.critic_count())
            .map(|_| Mlp::new(&[sd + ad, h, h, 1], Activation::Relu, Activation::Linear, 3e-3, &mut init))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            variant,
            n_services,
            target_actor: actor.clone(),
            target_critics: critics.clone(),
            actor_opt: AdamState::new(&actor, hyper.actor_optimizer),
            critic_opts: critics
                .iter()
                .map(|c| AdamState::new(c, hyper.critic_optimizer))
                .collect(),
            buffer: ReplayBuffer::new(hyper.buffer_capacity)?,
            explore_rng: stream(seed, Stream::Exploration),
            sample_rng: stream(seed, Stream::Sampling),
            smoothing_rng: stream(seed, Stream::Smoothing),
            counters: UpdateCounters::default(),
            actor,
            critics,
            hyper,
        })
    }

    pub fn td3(n_services: usize, hyper: Td3Hyper, seed: u64) -> Result<Self> {
        Self::new(Variant::Td3, n_services, hyper, seed)
    }

    pub fn ddpg(n_services: usize, hyper: Td3Hyper, seed: u64) -> Result<Self> {
        Self::new(Variant::Ddpg, n_services, hyper, seed)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn hyper(&self) -> &Td3Hyper {
        &self.hyper
    }

    pub fn smoothing_enabled(&self) -> bool {
        self.variant == Variant::Td3
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn target_actor(&self) -> &Mlp {
        &self.target_actor
    }

    pub fn critics(&self) -> &[Mlp] {
        &self.critics
    }

    pub fn target_critics(&self) -> &[Mlp] {
        &self.target_critics
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    /// Replaces every network and restarts the optimizers. Test hook for
    /// placing an agent in a known parameter state.
    pub fn set_networks(&mut self, actor: Mlp, critics: Vec<Mlp>) -> Result<()> {
        check_policy_shape(&self.actor, &actor)?;
        if critics.len() != self.critics.len() {
            return Err(Error::Contract("critic count mismatch".into()));
        }
        for (old, new) in self.critics.iter().zip(&critics) {
            check_policy_shape(old, new)?;
        }
        self.actor_opt = AdamState::new(&actor, self.hyper.actor_optimizer);
        self.critic_opts = critics
            .iter()
            .map(|c| AdamState::new(c, self.hyper.critic_optimizer))
            .collect();
        self.target_actor = actor.clone();
        self.target_critics = critics.clone();
        self.actor = actor;
        self.critics = critics;
        Ok(())
    }

    pub fn exploration_sigma(&self, t: u64) -> f64 {
        exploration_sigma(self.hyper.sigma_init, self.hyper.tau_decay, t)
    }

    /// Deterministic actor output in unit coordinates.
    pub fn actor_unit(&self, state: &StateVector) -> Result<Vec<f64>> {
        self.actor.predict_one(state.as_slice())
    }

    /// Allocation for `state` at global step `t`. Uniform random during
    /// warmup; otherwise the actor output plus decaying Gaussian noise.
    pub fn select_action(&mut self, state: &StateVector, t: u64, explore: bool) -> Result<ActionVector> {
        let mut u = self.actor_unit(state)?;
        if explore {
            if t < self.hyper.warmup_transitions {
                u.iter_mut()
                    .for_each(|x| *x = self.explore_rng.random_range(-1.0..=1.0));
            } else {
                let sigma = self.exploration_sigma(t);
                if sigma > 0.0 {
                    let normal = Normal::new(0.0, sigma).expect("finite sigma");
                    u.iter_mut()
                        .for_each(|x| *x = (*x + normal.sample(&mut self.explore_rng)).clamp(-1.0, 1.0));
                }
            }
        }
        ActionVector::from_unit(&u)
    }

    /// Target-actor actions for `next_states`, smoothed with clipped noise
    /// (TD3 only) and clamped back into the unit box.
    pub fn smoothed_target_actions(&mut self, next_states: ArrayView2<'_, f64>) -> Result<(Array2<f64>, f64)> {
        let mut a = self.target_actor.predict(next_states)?;
        let mut max_abs = 0.0f64;
        if self.smoothing_enabled() {
            let noise = clipped_noise(
                &mut self.smoothing_rng,
                self.hyper.smoothing_sigma,
                self.hyper.smoothing_clip,
                a.dim(),
            );
            max_abs = noise.iter().fold(0.0, |m, n| m.max(n.abs()));
            a += &noise;
        }
        a.mapv_inplace(|x| x.clamp(-1.0, 1.0));
        Ok((a, max_abs))
    }

    pub fn td_targets(&mut self, batch: &Batch) -> Result<TdTargets> {
        let (next_actions, max_abs_noise) = self.smoothed_target_actions(batch.next_states.view())?;
        let input = concatenate(Axis(1), &[batch.next_states.view(), next_actions.view()])
            .map_err(|e| Error::Contract(e.to_string()))?;
        let next_q = self
            .target_critics
            .iter()
            .map(|c| c.predict(input.view()).map(|q| q.column(0).to_owned()))
            .collect::<Result<Vec<_>>>()?;
        let gamma = self.hyper.gamma;
        let y = (0..batch.len())
            .map(|i| {
                td_target(
                    batch.rewards[i],
                    gamma,
                    next_q[0][i],
                    next_q.get(1).map(|q| q[i]),
                    batch.dones[i] > 0.5,
                )
            })
            .collect();
        Ok(TdTargets {
            y,
            next_q,
            max_abs_noise,
        })
    }

    /// One critic regression step towards `y`, returning the mean squared error.
    fn update_critic(&mut self, k: usize, input: ArrayView2<'_, f64>, y: &Array1<f64>) -> Result<f64> {
        let critic = &mut self.critics[k];
        let (q, cache) = critic.forward(input)?;
        let err = &q.column(0) - y;
        let b = y.len() as f64;
        let loss = err.mapv(|e| e * e).sum() / b;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("critic {} loss", k + 1)));
        }
        let grad_out = (err.mapv(|e| 2.0 * e / b)).insert_axis(Axis(1));
        let (grads, _) = critic.backward(&cache, grad_out.view())?;
        self.critic_opts[k].step(critic, &grads)?;
        Ok(loss)
    }

    /// Ascends mean `Q1(s, actor(s))` by one Adam step on the actor.
    fn update_actor(&mut self, states: ArrayView2<'_, f64>) -> Result<f64> {
        let sd = states.ncols();
        let (actions, actor_cache) = self.actor.forward(states)?;
        let input = concatenate(Axis(1), &[states, actions.view()])
            .map_err(|e| Error::Contract(e.to_string()))?;
        let (q, critic_cache) = self.critics[0].forward(input.view())?;
        let b = q.nrows() as f64;
        let loss = -q.sum() / b;
        if !loss.is_finite() {
            return Err(Error::NonFinite("actor loss".into()));
        }
        let grad_q = Array2::from_elem(q.dim(), -1.0 / b);
        let (_, input_grad) = self.critics[0].backward(&critic_cache, grad_q.view())?;
        let grad_actions = input_grad.slice(s![.., sd..]).to_owned();
        let (grads, _) = self.actor.backward(&actor_cache, grad_actions.view())?;
        self.actor_opt.step(&mut self.actor, &grads)?;
        Ok(loss)
    }

    /// One learning step on a minibatch from the replay buffer. Skipped while
    /// the buffer holds no more than `batch_size` transitions.
    pub fn train_step(&mut self) -> Result<TrainStats> {
        if self.buffer.len() <= self.hyper.batch_size {
            return Ok(TrainStats {
                skipped: true,
                ..Default::default()
            });
        }
        let sample = self.buffer.sample(self.hyper.batch_size, &mut self.sample_rng)?;
        let batch = Batch::from_transitions(&sample);
        self.train_on_batch(&batch)
    }

    /// Same update as [`ActorCriticAgent::train_step`] on a caller-supplied batch.
    pub fn train_on_batch(&mut self, batch: &Batch) -> Result<TrainStats> {
        let targets = self.td_targets(batch)?;
        let input = concatenate(Axis(1), &[batch.states.view(), batch.actions.view()])
            .map_err(|e| Error::Contract(e.to_string()))?;
        let critic_losses = (0..self.critics.len())
            .map(|k| self.update_critic(k, input.view(), &targets.y))
            .collect::<Result<Vec<_>>>()?;
        self.counters.critic_updates += 1;

        let mut stats = TrainStats {
            critic_losses,
            max_abs_smoothing_noise: targets.max_abs_noise,
            ..Default::default()
        };
        if self.counters.critic_updates % self.hyper.policy_freq == 0 {
            stats.actor_loss = Some(self.update_actor(batch.states.view())?);
            let tau = self.hyper.tau;
            soft_update(&mut self.target_actor, &self.actor, tau)?;
            for (t, c) in self.target_critics.iter_mut().zip(&self.critics) {
                soft_update(t, c, tau)?;
            }
            self.counters.actor_updates += 1;
            self.counters.target_updates += 1;
            stats.actor_updated = true;
            stats.targets_updated = true;
        }
        Ok(stats)
    }

    /// `Q_k(s, a)` for a single state and unit action.
    pub fn q_value(&self, k: usize, state: &StateVector, unit_action: &[f64]) -> Result<f64> {
        let input: Vec<f64> = state.as_slice().iter().chain(unit_action).copied().collect();
        Ok(self.critics[k].predict_one(&input)?[0])
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if t.state.n_services() != self.n_services {
            return Err(Error::Dimension {
                what: "transition services",
                expected: self.n_services,
                got: t.state.n_services(),
            });
        }
        self.buffer.push(t)
    }
}

impl Agent for ActorCriticAgent {
    fn algorithm(&self) -> Algorithm {
        match self.variant {
            Variant::Td3 => Algorithm::Td3,
            Variant::Ddpg => Algorithm::Ddpg,
        }
    }

    fn act(&mut self, obs: &Observation<'_>, explore: bool) -> Result<ActionVector> {
        self.select_action(obs.state, obs.global_step, explore)
    }

    fn observe(&mut self, transition: Transition) -> Result<()> {
        self.push(transition)
    }

    fn train_step(&mut self) -> Result<TrainStats> {
        ActorCriticAgent::train_step(self)
    }

    fn policy(&self) -> Option<&Mlp> {
        Some(&self.actor)
    }

    fn load_policy(&mut self, net: Mlp) -> Result<()> {
        check_policy_shape(&self.actor, &net)?;
        self.target_actor = net.clone();
        self.actor_opt = AdamState::new(&net, self.hyper.actor_optimizer);
        self.actor = net;
        Ok(())
    }

    fn counters(&self) -> UpdateCounters {
        self.counters
    }
}
