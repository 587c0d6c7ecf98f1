//! `valrl` with one extra agent, selectable as `Runner.agent_name = @sticky_agent`:
//!
//! ```text
//! cargo run --release --example sticky_agent -- train \
//!     --config configs/examples/sticky_agent_chain.gin --base-dir runs/sticky_agent/seed0
//! ```

mod agent;

use std::process::ExitCode;

use valrl::runner::AgentRegistry;

fn main() -> ExitCode {
    let mut registry = AgentRegistry::with_builtins();
    agent::register(&mut registry);
    valrl::cli::main_with(registry)
}
