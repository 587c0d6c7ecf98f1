//! Value-based deep reinforcement learning core.
//!
//! Everything in this crate is deterministic given its seeds and free of IO:
//! the toy environments and their preprocessing wrappers, the replay memory
//! with n-step assembly and sum-tree prioritization, a small double-precision
//! network/autodiff layer, and the DQN / C51 / Rainbow / IQN agents.
//!
//! File formats, configuration, checkpoint directories and the experiment
//! runner live in the `valrl` companion crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod agents;
pub mod codec;
pub mod envs;
mod error;
pub mod net;
pub mod replay;
pub mod rng;

pub use error::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;
