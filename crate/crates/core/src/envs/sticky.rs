use alloc::format;
use alloc::vec::Vec;

use super::{Environment, Observation, StepResult};
use crate::codec::Archive;
use crate::rng::Stream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StickyConfig {
    /// Probability ς of executing the previous action instead of the chosen one.
    pub stickiness: f64,
    /// Last executed action; `None` until the first step after a reset.
    pub previous_action: Option<usize>,
}

impl StickyConfig {
    pub fn new(stickiness: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&stickiness) {
            return Err(crate::error::contract(format!("stickiness {stickiness} outside [0, 1]")));
        }
        Ok(Self { stickiness, previous_action: None })
    }
}

/// Steps `env` with action momentum. One uniform draw is consumed per call, so
/// the stream position does not depend on ς.
pub fn sticky_step<E: Environment + ?Sized>(
    env: &mut E,
    chosen_action: usize,
    sticky: &mut StickyConfig,
    rng: &mut Stream,
) -> Result<StepResult> {
    sticky_step_traced(env, chosen_action, sticky, rng).map(|(result, _)| result)
}

/// As [`sticky_step`], also reporting whether the previous action was forced.
fn sticky_step_traced<E: Environment + ?Sized>(
    env: &mut E,
    chosen_action: usize,
    sticky: &mut StickyConfig,
    rng: &mut Stream,
) -> Result<(StepResult, bool)> {
    let draw = rng.uniform();
    let (executed, forced) = match sticky.previous_action {
        Some(prev) if draw < sticky.stickiness => (prev, true),
        _ => (chosen_action, false),
    };
    let result = env.step(executed)?;
    sticky.previous_action = Some(executed);
    Ok((result, forced))
}

/// Environment wrapper applying [`sticky_step`] to every step.
#[derive(Debug, Clone)]
pub struct StickyEnv<E> {
    inner: E,
    sticky: StickyConfig,
    rng: Stream,
    repeats: u64,
    eligible: u64,
}

impl<E: Environment> StickyEnv<E> {
    pub fn new(inner: E, stickiness: f64, rng: Stream) -> Result<Self> {
        Ok(Self { inner, sticky: StickyConfig::new(stickiness)?, rng, repeats: 0, eligible: 0 })
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn stickiness(&self) -> f64 {
        self.sticky.stickiness
    }

    pub fn set_stickiness(&mut self, stickiness: f64) -> Result<()> {
        self.sticky.stickiness = StickyConfig::new(stickiness)?.stickiness;
        Ok(())
    }

    pub fn previous_action(&self) -> Option<usize> {
        self.sticky.previous_action
    }

    /// Fraction of steps (with a previous action available) on which the
    /// previous action was forced instead of the chosen one.
    pub fn repeat_rate(&self) -> f64 {
        if self.eligible == 0 {
            0.0
        } else {
            self.repeats as f64 / self.eligible as f64
        }
    }
}

impl<E: Environment> Environment for StickyEnv<E> {
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }

    fn frame_shape(&self) -> (usize, usize) {
        self.inner.frame_shape()
    }

    fn reset(&mut self) -> Observation {
        self.sticky.previous_action = None;
        self.inner.reset()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        let eligible = self.sticky.previous_action.is_some();
        let (result, forced) = sticky_step_traced(&mut self.inner, action, &mut self.sticky, &mut self.rng)?;
        self.eligible += u64::from(eligible);
        self.repeats += u64::from(forced);
        Ok(result)
    }

    fn save_state(&self) -> Vec<u8> {
        let mut a = Archive::new();
        let prev = self.sticky.previous_action.map_or(u64::MAX, |p| p as u64);
        a.push_u64("sticky", alloc::vec![prev, self.repeats, self.eligible]).expect("fresh archive");
        a.push_f64("stickiness", alloc::vec![1], alloc::vec![self.sticky.stickiness]).expect("fresh archive");
        a.push_u8("rng", self.rng.to_bytes().to_vec()).expect("fresh archive");
        a.push_u8("inner", self.inner.save_state()).expect("fresh archive");
        a.encode()
    }

    fn load_state(&mut self, bytes: &[u8]) -> Result<()> {
        let a = Archive::decode(bytes)?;
        let v = a.u64s_exact("sticky", 3)?;
        let stickiness = a.f64s("stickiness")?;
        if stickiness.len() != 1 {
            return Err(Error::Decode("stickiness must be a scalar".into()));
        }
        self.inner.load_state(a.u8s("inner")?)?;
        self.sticky = StickyConfig::new(stickiness[0]).map_err(|e| Error::Decode(format!("{e}")))?;
        self.sticky.previous_action = (v[0] != u64::MAX).then_some(v[0] as usize);
        self.repeats = v[1];
        self.eligible = v[2];
        self.rng = Stream::from_bytes(a.u8s("rng")?)?;
        Ok(())
    }
}
