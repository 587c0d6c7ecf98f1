use alloc::format;
use alloc::vec::Vec;

use super::{check_action, Environment, Observation, StepResult};
use crate::codec::Archive;
use crate::{Error, Result};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// `N` states in a line. The agent starts at the left end; stepping RIGHT into
/// the last state pays +1 and ends the game. Every other step pays 0. Games are
/// cut off after `4 N` steps.
///
/// Observations are a one-hot `N × 1` frame.
#[derive(Debug, Clone)]
pub struct ChainMdp {
    num_states: usize,
    state: usize,
    steps: usize,
    game_over: bool,
}

impl ChainMdp {
    pub fn new(num_states: usize) -> Result<Self> {
        if num_states < 2 {
            return Err(crate::error::contract("chain needs at least 2 states"));
        }
        Ok(Self { num_states, state: 0, steps: 0, game_over: false })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn step_cap(&self) -> usize {
        4 * self.num_states
    }

    /// Deterministic successor and reward, ignoring the step cap.
    pub fn transition(num_states: usize, state: usize, action: usize) -> (usize, f64) {
        let next = if action == RIGHT { (state + 1).min(num_states - 1) } else { state.saturating_sub(1) };
        let reward = if next == num_states - 1 && state != next { 1.0 } else { 0.0 };
        (next, reward)
    }

    fn observe(&self) -> Observation {
        let mut obs = Observation::zeros(self.num_states, 1);
        obs.set(self.state, 0, 255);
        obs
    }
}

impl Environment for ChainMdp {
    fn name(&self) -> &'static str {
        "ChainMDP"
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn frame_shape(&self) -> (usize, usize) {
        (self.num_states, 1)
    }

    fn reset(&mut self) -> Observation {
        self.state = 0;
        self.steps = 0;
        self.game_over = false;
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        check_action(action, 2)?;
        if self.game_over {
            return Err(crate::error::contract("step after game over; reset first"));
        }
        let (next, reward) = Self::transition(self.num_states, self.state, action);
        self.state = next;
        self.steps += 1;
        self.game_over = next == self.num_states - 1 || self.steps >= self.step_cap();
        Ok(StepResult {
            observation: self.observe(),
            reward,
            game_over: self.game_over,
            life_lost: false,
            lives_remaining: 1,
        })
    }

    fn save_state(&self) -> Vec<u8> {
        let mut a = Archive::new();
        a.push_u64(
            "chain",
            alloc::vec![self.num_states as u64, self.state as u64, self.steps as u64, self.game_over as u64],
        )
        .expect("fresh archive");
        a.encode()
    }

    fn load_state(&mut self, bytes: &[u8]) -> Result<()> {
        let a = Archive::decode(bytes)?;
        let v = a.u64s_exact("chain", 4)?;
        if v[0] as usize != self.num_states {
            return Err(Error::Decode(format!("chain size {} does not match {}", v[0], self.num_states)));
        }
        self.state = v[1] as usize;
        self.steps = v[2] as usize;
        self.game_over = v[3] != 0;
        Ok(())
    }
}
