use alloc::format;
use alloc::vec::Vec;

use super::EpsilonSchedule;
use crate::net::OptimizerConfig;
use crate::replay::ReplayScheme;
use crate::Result;

/// Hyperparameters shared by every value-based agent. Durations are in
/// environment steps (one frame per step for the toy environments).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DqnConfig {
    pub gamma: f64,
    pub update_horizon: usize,
    pub min_replay_history: u64,
    pub update_period: u64,
    pub target_update_period: u64,
    pub epsilon_train: f64,
    pub epsilon_eval: f64,
    pub epsilon_decay_period: u64,
    pub epsilon_fn: EpsilonSchedule,
    pub replay_capacity: usize,
    pub replay_scheme: ReplayScheme,
    pub batch_size: usize,
    pub stack_size: usize,
    pub hidden_units: usize,
    pub optimizer: OptimizerConfig,
    /// Exponent β of the importance weights (1/p)^β.
    pub importance_exponent: f64,
    /// Priorities pushed back to replay are max(loss^ω, floor).
    pub priority_exponent: f64,
    pub priority_floor: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            update_horizon: 1,
            min_replay_history: 80_000,
            update_period: 4,
            target_update_period: 32_000,
            epsilon_train: 0.01,
            epsilon_eval: 0.001,
            epsilon_decay_period: 1_000_000,
            epsilon_fn: EpsilonSchedule::LinearDecay,
            replay_capacity: 100_000,
            replay_scheme: ReplayScheme::Uniform,
            batch_size: 32,
            stack_size: 4,
            hidden_units: 512,
            optimizer: OptimizerConfig::adam(1e-3),
            importance_exponent: 0.5,
            priority_exponent: 0.5,
            priority_floor: 1e-6,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: alloc::string::String| Err(crate::error::contract(msg));
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if self.update_horizon == 0 || self.update_period == 0 || self.target_update_period == 0 {
            return fail("update horizon and periods must be at least 1".into());
        }
        if self.epsilon_decay_period == 0 {
            return fail("epsilon decay period must be positive".into());
        }
        for (name, eps) in [("epsilon_train", self.epsilon_train), ("epsilon_eval", self.epsilon_eval)] {
            if !(0.0..=1.0).contains(&eps) {
                return fail(format!("{name} {eps} outside [0, 1]"));
            }
        }
        if self.batch_size == 0 || self.stack_size == 0 || self.hidden_units == 0 {
            return fail("batch size, stack size and hidden units must be positive".into());
        }
        if self.priority_floor <= 0.0 {
            return fail("priority floor must be positive".into());
        }
        Ok(())
    }
}

/// Support of a categorical return distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CategoricalConfig {
    pub num_atoms: usize,
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for CategoricalConfig {
    fn default() -> Self {
        Self { num_atoms: 51, v_min: -1.0, v_max: 1.0 }
    }
}

impl CategoricalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_atoms < 2 {
            return Err(crate::error::contract(format!("need at least 2 atoms, got {}", self.num_atoms)));
        }
        if !(self.v_min < self.v_max) {
            return Err(crate::error::contract(format!("v_min {} must be below v_max {}", self.v_min, self.v_max)));
        }
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        (self.v_max - self.v_min) / (self.num_atoms - 1) as f64
    }

    /// Atoms z_i = v_min + i Δz.
    pub fn support(&self) -> Vec<f64> {
        let delta = self.delta();
        (0..self.num_atoms).map(|i| self.v_min + i as f64 * delta).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IqnConfig {
    /// τ samples for the online distribution (N).
    pub num_tau_samples: usize,
    /// τ′ samples for the target distribution (N′).
    pub num_tau_prime_samples: usize,
    /// Samples averaged when choosing actions (K).
    pub num_quantile_samples: usize,
    pub embedding_dim: usize,
    pub kappa: f64,
}

impl Default for IqnConfig {
    fn default() -> Self {
        Self { num_tau_samples: 8, num_tau_prime_samples: 8, num_quantile_samples: 32, embedding_dim: 64, kappa: 1.0 }
    }
}

impl IqnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_tau_samples == 0 || self.num_tau_prime_samples == 0 || self.num_quantile_samples == 0 {
            return Err(crate::error::contract("quantile sample counts must be at least 1"));
        }
        if self.embedding_dim == 0 {
            return Err(crate::error::contract("embedding dimension must be positive"));
        }
        if !(self.kappa > 0.0) {
            return Err(crate::error::contract(format!("kappa {} must be positive", self.kappa)));
        }
        Ok(())
    }
}
