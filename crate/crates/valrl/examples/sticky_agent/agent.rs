//! An agent written directly against the runner contract. It learns nothing:
//! each step it repeats its previous action with a fixed probability and
//! otherwise picks uniformly at random.

use valrl::config::Resolver;
use valrl::core::agents::Agent;
use valrl::core::codec::Archive;
use valrl::core::envs::Observation;
use valrl::core::rng::Stream;
use valrl::core::{Error, Result};
use valrl::runner::{AgentRegistry, RunnerError};

pub const NAME: &str = "sticky_agent";
pub const SCOPE: &str = "StickyAgent";

#[derive(Debug, Clone)]
pub struct StickyAgent {
    num_actions: usize,
    repeat_probability: f64,
    rng: Stream,
    /// Survives episode boundaries.
    previous: Option<usize>,
    eval: bool,
}

impl StickyAgent {
    pub fn new(num_actions: usize, repeat_probability: f64, seed: u64) -> Result<Self> {
        if num_actions == 0 || !(0.0..=1.0).contains(&repeat_probability) {
            return Err(Error::Contract(format!("need actions and a repeat probability in [0, 1], got {num_actions} and {repeat_probability}")));
        }
        Ok(Self { num_actions, repeat_probability, rng: Stream::derive(seed, "agent/sticky"), previous: None, eval: false })
    }

    fn act(&mut self) -> usize {
        let action = match self.previous {
            Some(prev) if self.rng.uniform() < self.repeat_probability => prev,
            _ => self.rng.below(self.num_actions),
        };
        self.previous = Some(action);
        action
    }
}

impl Agent for StickyAgent {
    fn name(&self) -> &str {
        NAME
    }

    fn begin_episode(&mut self, _observation: &Observation) -> Result<usize> {
        Ok(self.act())
    }

    fn step(&mut self, _reward: f64, _observation: &Observation) -> Result<usize> {
        Ok(self.act())
    }

    fn end_episode(&mut self, _reward: f64) -> Result<()> {
        Ok(())
    }

    fn set_eval_mode(&mut self, eval: bool) {
        self.eval = eval;
    }

    fn eval_mode(&self) -> bool {
        self.eval
    }

    fn bundle(&self) -> Result<Vec<u8>> {
        let mut a = Archive::new();
        a.push_u8("rng", self.rng.to_bytes().to_vec())?;
        // previous + 1, 0 for none.
        a.push_u64("state", vec![self.previous.map_or(0, |p| p as u64 + 1), self.eval as u64])?;
        Ok(a.encode())
    }

    fn unbundle(&mut self, bytes: &[u8]) -> Result<()> {
        let a = Archive::decode(bytes)?;
        let rng = Stream::from_bytes(a.u8s("rng")?)?;
        let state = a.u64s_exact("state", 2)?;
        if state[0] > self.num_actions as u64 {
            return Err(Error::Decode(format!("previous action {} out of range", state[0] - 1)));
        }
        self.rng = rng;
        self.previous = state[0].checked_sub(1).map(|p| p as usize);
        self.eval = state[1] == 1;
        Ok(())
    }
}

pub fn register(registry: &mut AgentRegistry) {
    registry.register(NAME, |res: &mut Resolver, spec, seed| {
        let p = res.f64(SCOPE, "repeat_probability", 0.5)?;
        let agent = StickyAgent::new(spec.num_actions, p, seed).map_err(|source| RunnerError::Agent { agent: NAME.into(), source })?;
        Ok(Box::new(agent))
    });
}
