//! Replay memory: circular transition store with n-step assembly, uniform and
//! stratified prioritized sampling, and compressed checkpoints.

mod store;
mod sum_tree;

pub use store::{ReplayBatch, ReplayConfig, TransitionStore};
pub use sum_tree::SumTree;

/// How minibatches are drawn from a [`TransitionStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReplayScheme {
    #[default]
    Uniform,
    Prioritized,
}

impl ReplayScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            ReplayScheme::Uniform => "uniform",
            ReplayScheme::Prioritized => "prioritized",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "uniform" => Some(ReplayScheme::Uniform),
            "prioritized" => Some(ReplayScheme::Prioritized),
            _ => None,
        }
    }
}
