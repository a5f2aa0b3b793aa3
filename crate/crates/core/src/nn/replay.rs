use std::collections::VecDeque;

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::domain::Transition;
use crate::error::{check_len, Error, Result};

pub const DEFAULT_CAPACITY: usize = 100_000;

/// Bounded FIFO of transitions with uniform sampling (with replacement).
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::validation("buffer_capacity", "must be > 0"));
        }
        Ok(Self {
            capacity,
            storage: VecDeque::with_capacity(capacity.min(4096)),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.storage.iter()
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if let Some(first) = self.storage.front() {
            check_len(
                "transition state",
                first.state.as_slice().len(),
                t.state.as_slice().len(),
            )?;
            check_len(
                "transition action",
                first.action.n_services(),
                t.action.n_services(),
            )?;
        }
        if self.storage.len() == self.capacity {
            self.storage.pop_front();
        }
        self.storage.push_back(t);
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        if self.storage.len() < batch_size || self.storage.is_empty() {
            return Err(Error::InsufficientSamples {
                have: self.storage.len(),
                need: batch_size.max(1),
            });
        }
        Ok((0..batch_size)
            .map(|_| &self.storage[rng.random_range(0..self.storage.len())])
            .collect())
    }
}

/// Row-stacked minibatch; actions in unit-box coordinates.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    pub dones: Array1<f64>,
}

impl Batch {
    pub fn from_transitions(ts: &[&Transition]) -> Self {
        let b = ts.len();
        let sd = ts[0].state.as_slice().len();
        let ad = 2 * ts[0].action.n_services();
        let mut states = Array2::zeros((b, sd));
        let mut next_states = Array2::zeros((b, sd));
        let mut actions = Array2::zeros((b, ad));
        for (i, t) in ts.iter().enumerate() {
            states.row_mut(i).assign(&ndarray::aview1(t.state.as_slice()));
            next_states.row_mut(i).assign(&ndarray::aview1(t.next_state.as_slice()));
            actions.row_mut(i).assign(&Array1::from(t.action.to_unit()));
        }
        Self {
            states,
            actions,
            rewards: ts.iter().map(|t| t.reward).collect(),
            next_states,
            dones: ts.iter().map(|t| if t.done { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ActionVector, StateVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn transition(tag: f64) -> Transition {
        let s = StateVector::from_flat(vec![0.1; 4]).unwrap();
        Transition::new(s.clone(), ActionVector::uniform(1, 1.0, 100.0), tag, s, false).unwrap()
    }

    #[test]
    fn fifo_eviction() {
        let mut buf = ReplayBuffer::new(3).unwrap();
        for k in 0..4 {
            buf.push(transition(k as f64)).unwrap();
        }
        assert_eq!(buf.len(), 3);
        let rewards: Vec<f64> = buf.iter().map(|t| t.reward).collect();
        assert_eq!(rewards, [1.0, 2.0, 3.0]);
    }

    #[test]
    fn push_to_empty_and_fill_default_capacity() {
        let mut buf = ReplayBuffer::new(DEFAULT_CAPACITY).unwrap();
        buf.push(transition(0.0)).unwrap();
        assert_eq!(buf.len(), 1);
        for k in 1..DEFAULT_CAPACITY + 10 {
            buf.push(transition(k as f64)).unwrap();
        }
        assert_eq!(buf.len(), DEFAULT_CAPACITY);
        assert_eq!(buf.iter().next().unwrap().reward, 10.0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut buf = ReplayBuffer::new(4).unwrap();
        buf.push(transition(0.0)).unwrap();
        let s = StateVector::from_flat(vec![0.1; 8]).unwrap();
        let wide = Transition::new(s.clone(), ActionVector::uniform(2, 1.0, 100.0), 0.0, s, true).unwrap();
        assert!(matches!(buf.push(wide), Err(Error::Dimension { .. })));
    }

    #[test]
    fn sampling_guards_and_determinism() {
        let mut buf = ReplayBuffer::new(10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(buf.sample(1, &mut rng), Err(Error::InsufficientSamples { .. })));
        buf.push(transition(7.0)).unwrap();
        assert_eq!(buf.sample(1, &mut rng).unwrap()[0].reward, 7.0);
        for k in 0..5 {
            buf.push(transition(k as f64)).unwrap();
        }
        let a: Vec<f64> = buf.sample(4, &mut ChaCha8Rng::seed_from_u64(3)).unwrap().iter().map(|t| t.reward).collect();
        let b: Vec<f64> = buf.sample(4, &mut ChaCha8Rng::seed_from_u64(3)).unwrap().iter().map(|t| t.reward).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn batch_layout() {
        let t = transition(2.0);
        let b = Batch::from_transitions(&[&t, &t]);
        assert_eq!(b.states.dim(), (2, 4));
        assert_eq!(b.actions.dim(), (2, 2));
        assert_eq!(b.rewards.to_vec(), vec![2.0, 2.0]);
        assert_eq!(b.dones.to_vec(), vec![0.0, 0.0]);
    }
}
