use alloc::format;

use super::ParameterSet;
use crate::codec::Archive;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerConfig {
    Adam { learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64 },
    /// Centered or plain RMSProp; `epsilon` is added inside the square root.
    RmsProp { learning_rate: f64, decay: f64, epsilon: f64, centered: bool },
}

impl OptimizerConfig {
    pub fn adam(learning_rate: f64) -> Self {
        OptimizerConfig::Adam { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Optimizer hyperparameters plus per-parameter moment accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    config: OptimizerConfig,
    step: u64,
    first: ParameterSet,
    second: ParameterSet,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, params: &ParameterSet) -> Self {
        Self { config, step: 0, first: params.zeros_like(), second: params.zeros_like() }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn apply(&mut self, params: &mut ParameterSet, grads: &ParameterSet) -> Result<()> {
        if !params.same_layout(grads) || !params.same_layout(&self.first) {
            return Err(crate::error::contract("parameters, gradients and optimizer state differ in layout"));
        }
        for (name, g) in grads.iter() {
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of `{name}`")));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let moments = self.first.iter_mut().zip(self.second.iter_mut());
        for (((_, p), (_, g)), ((_, m), (_, v))) in params.iter_mut().zip(grads.iter()).zip(moments) {
            let (p, g, m, v) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
            match self.config {
                OptimizerConfig::Adam { learning_rate, beta1, beta2, epsilon } => {
                    let c1 = 1.0 - libm::pow(beta1, t);
                    let c2 = 1.0 - libm::pow(beta2, t);
                    for i in 0..p.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        p[i] -= learning_rate * (m[i] / c1) / (libm::sqrt(v[i] / c2) + epsilon);
                    }
                }
                OptimizerConfig::RmsProp { learning_rate, decay, epsilon, centered } => {
                    for i in 0..p.len() {
                        v[i] = decay * v[i] + (1.0 - decay) * g[i] * g[i];
                        let mut denom = v[i];
                        if centered {
                            m[i] = decay * m[i] + (1.0 - decay) * g[i];
                            denom -= m[i] * m[i];
                        }
                        p[i] -= learning_rate * g[i] / libm::sqrt(denom + epsilon);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn write_archive(&self, prefix: &str, archive: &mut Archive) -> Result<()> {
        archive.push_u64(format!("{prefix}step"), alloc::vec![self.step])?;
        self.first.write_archive(&format!("{prefix}first/"), archive)?;
        self.second.write_archive(&format!("{prefix}second/"), archive)
    }

    pub fn read_archive(&mut self, prefix: &str, archive: &Archive) -> Result<()> {
        self.step = archive.u64s_exact(&format!("{prefix}step"), 1)?[0];
        self.first.read_archive(&format!("{prefix}first/"), archive)?;
        self.second.read_archive(&format!("{prefix}second/"), archive)
    }
}
