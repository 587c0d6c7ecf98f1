//! Environment contract, the built-in toy games and preprocessing wrappers.

use alloc::vec;
use alloc::vec::Vec;

use crate::Result;

pub mod catch;
pub mod chain;
mod stack;
mod sticky;

pub use catch::CatchLives;
pub use chain::ChainMdp;
pub use stack::{stack_frames, FrameStack, StackedState};
pub use sticky::{sticky_step, StickyConfig, StickyEnv};

/// A W×H grid of 8-bit intensities; pixel value `v` encodes intensity `v / 255`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Observation {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, pixels: vec![0; width * height] }
    }

    /// Wraps raw pixels; `pixels.len()` must equal `width * height`.
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(crate::error::contract(alloc::format!(
                "observation {}x{} needs {} pixels, got {}",
                width,
                height,
                width * height,
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub(crate) fn set(&mut self, x: usize, y: usize, value: u8) {
        self.pixels[y * self.width + x] = value;
    }

    /// Intensity in `[0, 1]` at column `x`, row `y`.
    pub fn intensity(&self, x: usize, y: usize) -> f64 {
        f64::from(self.pixels[y * self.width + x]) / 255.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub game_over: bool,
    pub life_lost: bool,
    pub lives_remaining: u32,
}

/// The contract every environment exposes to agents and the runner.
pub trait Environment {
    fn name(&self) -> &'static str;
    fn num_actions(&self) -> usize;
    /// `(width, height)` of every observation.
    fn frame_shape(&self) -> (usize, usize);
    fn reset(&mut self) -> Observation;
    /// Advances one step. Fails on an out-of-range action or after game over.
    fn step(&mut self, action: usize) -> Result<StepResult>;
    /// Serializes the complete internal state, including random streams.
    fn save_state(&self) -> Vec<u8>;
    fn load_state(&mut self, bytes: &[u8]) -> Result<()>;
}

impl<E: Environment + ?Sized> Environment for alloc::boxed::Box<E> {
    fn name(&self) -> &'static str {
        (**self).name()
    }
    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }
    fn frame_shape(&self) -> (usize, usize) {
        (**self).frame_shape()
    }
    fn reset(&mut self) -> Observation {
        (**self).reset()
    }
    fn step(&mut self, action: usize) -> Result<StepResult> {
        (**self).step(action)
    }
    fn save_state(&self) -> Vec<u8> {
        (**self).save_state()
    }
    fn load_state(&mut self, bytes: &[u8]) -> Result<()> {
        (**self).load_state(bytes)
    }
}

pub(crate) fn check_action(action: usize, num_actions: usize) -> Result<()> {
    if action >= num_actions {
        return Err(crate::error::contract(alloc::format!(
            "action {action} out of range (environment has {num_actions} actions)"
        )));
    }
    Ok(())
}

/// Where the replay memory sees episode boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TerminationMode {
    /// Only a true game over is terminal.
    #[default]
    GameOver,
    /// Every lost life is also marked terminal, without resetting the game.
    LifeLoss,
}

impl TerminationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminationMode::GameOver => "GameOver",
            TerminationMode::LifeLoss => "LifeLoss",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "GameOver" => Some(TerminationMode::GameOver),
            "LifeLoss" => Some(TerminationMode::LifeLoss),
            _ => None,
        }
    }
}

/// Whether `result` closes an episode in replay. The environment itself is
/// only reset on `game_over`, whatever the mode.
pub fn terminal_for_replay(result: &StepResult, mode: TerminationMode) -> bool {
    match mode {
        TerminationMode::GameOver => result.game_over,
        TerminationMode::LifeLoss => result.game_over || result.life_lost,
    }
}
