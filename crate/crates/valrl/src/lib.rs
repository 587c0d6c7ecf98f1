//! Experiment infrastructure around `valrl-core`: single-file configuration,
//! the runner, crash-safe checkpoints, the experiment log and the plotting
//! tools.
//!
//! A run is fully described by one config file plus optional overrides:
//!
//! ```no_run
//! use valrl::config::parse_config;
//! use valrl::runner::{AgentRegistry, Runner};
//!
//! let config = parse_config("Runner.agent_name = @dqn\nRunner.seed = 3", "inline")?;
//! let mut runner = Runner::new("runs/dqn-3".as_ref(), &config, &AgentRegistry::with_builtins())?;
//! runner.run_experiment()?;
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod runner;
pub mod telemetry;

pub use valrl_core as core;
