//! `valrl` with one extra agent, selectable as `Runner.agent_name = @random_dqn`:
//!
//! ```text
//! cargo run --release --example random_dqn -- train \
//!     --config configs/examples/random_dqn_chain.gin --base-dir runs/random_dqn/seed0
//! cargo run --release --example random_dqn -- compare \
//!     --runs 'runs/random_dqn/*' --baselines baselines --out runs/random_dqn/compare
//! ```

mod agent;

use std::process::ExitCode;

use valrl::runner::AgentRegistry;

fn main() -> ExitCode {
    let mut registry = AgentRegistry::with_builtins();
    agent::register(&mut registry);
    valrl::cli::main_with(registry)
}
