//! DQN with its action selection replaced by a uniform random choice.
//! Learning, replay and checkpointing are inherited unchanged.

use valrl::config::Resolver;
use valrl::core::agents::{ActionPolicy, DqnConfig, DqnHead, ValueAgent};
use valrl::core::rng::Stream;
use valrl::runner::{resolve_dqn_config, AgentRegistry, RunnerError};

pub const NAME: &str = "random_dqn";
pub const SCOPE: &str = "RandomDQNAgent";

/// Ignores ε and the value estimates.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformRandomPolicy;

impl ActionPolicy for UniformRandomPolicy {
    fn select_action(
        &mut self,
        _epsilon: f64,
        num_actions: usize,
        rng: &mut Stream,
        _values: &mut dyn FnMut() -> valrl::core::Result<Vec<f64>>,
    ) -> valrl::core::Result<usize> {
        Ok(rng.below(num_actions))
    }
}

pub type RandomDqnAgent = ValueAgent<DqnHead, UniformRandomPolicy>;

pub fn register(registry: &mut AgentRegistry) {
    registry.register(NAME, |res: &mut Resolver, spec, seed| {
        let cfg = resolve_dqn_config(res, SCOPE, DqnConfig::default())?;
        let err = |source| RunnerError::Agent { agent: NAME.into(), source };
        let head = DqnHead::new(cfg.stack_size * spec.frame_len(), cfg.hidden_units, spec.num_actions).map_err(err)?;
        let agent: RandomDqnAgent = ValueAgent::with_policy(NAME, spec, cfg, head, UniformRandomPolicy, seed).map_err(err)?;
        Ok(Box::new(agent))
    });
}
