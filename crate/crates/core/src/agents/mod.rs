//! Value-based agents.
//!
//! [`Agent`] is the minimal contract the runner drives. [`ValueAgent`] carries
//! the machinery shared by DQN, C51, Rainbow and IQN (replay, target network,
//! optimizer, exploration) and is specialized by a [`ValueHead`] that owns the
//! network shape and the loss. Action selection is a separate
//! [`ActionPolicy`], so a variant can replace it without touching learning.

use alloc::vec::Vec;

use crate::envs::Observation;
use crate::net::ParameterSet;
use crate::replay::ReplayBatch;
use crate::rng::Stream;
use crate::{Error, Result};

mod categorical;
mod config;
mod dqn;
mod iqn;
mod schedule;
mod value;

pub use categorical::{c51_parametrize, categorical_projection, rainbow_loss, CategoricalHead};
pub use config::{CategoricalConfig, DqnConfig, IqnConfig};
pub use dqn::{dqn_loss, dqn_target, DqnHead};
pub use iqn::{iqn_loss, iqn_loss_with_taus, quantile_features, QuantileHead, TauSamples};
pub use schedule::{linearly_decaying_epsilon, EpsilonSchedule};
pub use value::{
    c51_agent, dqn_agent, implicit_quantile_agent, rainbow_agent, AgentCounters, C51Agent, DqnAgent,
    ImplicitQuantileAgent, RainbowAgent, ValueAgent,
};

/// What the runner needs from an agent. Episodes follow
/// `begin_episode (step)* end_episode`.
pub trait Agent {
    /// Registered name, e.g. `"dqn"`.
    fn name(&self) -> &str;
    fn begin_episode(&mut self, observation: &Observation) -> Result<usize>;
    fn step(&mut self, reward: f64, observation: &Observation) -> Result<usize>;
    fn end_episode(&mut self, reward: f64) -> Result<()>;
    /// In eval mode agents act with their evaluation exploration rate and do
    /// not learn or store transitions.
    fn set_eval_mode(&mut self, eval: bool);
    fn eval_mode(&self) -> bool;
    /// Serializes the full agent state for checkpointing.
    fn bundle(&self) -> Result<Vec<u8>> {
        Err(Error::Unsupported("bundle"))
    }
    fn unbundle(&mut self, _bytes: &[u8]) -> Result<()> {
        Err(Error::Unsupported("unbundle"))
    }
}

impl<A: Agent + ?Sized> Agent for alloc::boxed::Box<A> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn begin_episode(&mut self, observation: &Observation) -> Result<usize> {
        (**self).begin_episode(observation)
    }
    fn step(&mut self, reward: f64, observation: &Observation) -> Result<usize> {
        (**self).step(reward, observation)
    }
    fn end_episode(&mut self, reward: f64) -> Result<()> {
        (**self).end_episode(reward)
    }
    fn set_eval_mode(&mut self, eval: bool) {
        (**self).set_eval_mode(eval)
    }
    fn eval_mode(&self) -> bool {
        (**self).eval_mode()
    }
    fn bundle(&self) -> Result<Vec<u8>> {
        (**self).bundle()
    }
    fn unbundle(&mut self, bytes: &[u8]) -> Result<()> {
        (**self).unbundle(bytes)
    }
}

/// Action count and frame geometry an agent is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvSpec {
    pub num_actions: usize,
    pub frame_width: usize,
    pub frame_height: usize,
}

impl EnvSpec {
    pub fn of<E: crate::envs::Environment + ?Sized>(env: &E) -> Self {
        let (frame_width, frame_height) = env.frame_shape();
        Self { num_actions: env.num_actions(), frame_width, frame_height }
    }

    pub fn frame_len(&self) -> usize {
        self.frame_width * self.frame_height
    }
}

/// Chooses an action given the current exploration rate. `values` lazily
/// computes per-action values for the current state.
pub trait ActionPolicy {
    fn select_action(
        &mut self,
        epsilon: f64,
        num_actions: usize,
        rng: &mut Stream,
        values: &mut dyn FnMut() -> Result<Vec<f64>>,
    ) -> Result<usize>;
}

/// Uniform random action with probability ε, otherwise greedy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EpsilonGreedy;

impl ActionPolicy for EpsilonGreedy {
    fn select_action(
        &mut self,
        epsilon: f64,
        num_actions: usize,
        rng: &mut Stream,
        values: &mut dyn FnMut() -> Result<Vec<f64>>,
    ) -> Result<usize> {
        if rng.uniform() < epsilon {
            Ok(rng.below(num_actions))
        } else {
            Ok(argmax(&values()?))
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Result of evaluating a loss on a minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub per_sample: Vec<f64>,
    /// Mean of importance-weighted per-sample losses.
    pub batch_loss: f64,
    /// Gradient of `batch_loss` with respect to the online parameters.
    pub grads: ParameterSet,
}

/// Network shape and loss of a value-based agent.
pub trait ValueHead {
    fn init_params(&self, rng: &mut Stream) -> Result<ParameterSet>;
    /// `[batch, num_actions]` values used for greedy action selection.
    fn action_values(&self, params: &ParameterSet, states: &[f64], rng: &mut Stream) -> Result<Vec<f64>>;
    fn loss(
        &self,
        online: &ParameterSet,
        target: &ParameterSet,
        batch: &ReplayBatch,
        weights: &[f64],
        rng: &mut Stream,
    ) -> Result<LossOutput>;
}

pub(crate) fn body_layers(input_dim: usize, hidden: usize) -> Vec<crate::net::Dense> {
    use crate::net::{Activation, Dense};
    alloc::vec![Dense::new("fc1", input_dim, hidden, Activation::Relu), Dense::new("fc2", hidden, hidden, Activation::Relu)]
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// Random minibatch with mixed terminal flags and horizons.
    pub fn random_batch(b: usize, state_len: usize, num_actions: usize, rng: &mut Stream) -> ReplayBatch {
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.uniform()).collect() };
        let states = draw(b * state_len);
        let next_states = draw(b * state_len);
        let returns: Vec<f64> = draw(b).iter().map(|u| 2.0 * u - 1.0).collect();
        let flags = draw(b);
        let picks = draw(b);
        let terminal_within_n: Vec<bool> = flags.iter().map(|&u| u < 0.25).collect();
        let horizons: Vec<usize> = picks.iter().map(|&u| 1 + (u * 3.0) as usize).collect();
        let bootstrap_discounts =
            terminal_within_n.iter().zip(&horizons).map(|(&t, &m)| if t { 0.0 } else { libm::pow(0.9, m as f64) }).collect();
        let actions = draw(b).iter().map(|u| ((u * num_actions as f64) as usize).min(num_actions - 1)).collect();
        ReplayBatch {
            state_len,
            states,
            actions,
            n_step_returns: returns,
            next_states,
            terminal_within_n,
            horizons,
            indices: (0..b).collect(),
            probabilities: alloc::vec![1.0 / b as f64; b],
            bootstrap_discounts,
        }
    }

    /// Random biases keep units off the ReLU kink for finite differences.
    pub fn randomize_biases(mut params: ParameterSet, rng: &mut Stream) -> ParameterSet {
        for (name, t) in params.iter_mut() {
            if name.ends_with(".bias") {
                t.data_mut().iter_mut().for_each(|b| *b = rng.uniform() - 0.5);
            }
        }
        params
    }
}
