//! Experiment lifecycle: drives agents through episodes and iterations, and
//! keeps the log and checkpoints of a run in one base directory.
//!
//! ```text
//! <base>/config.gin     effective configuration of the run
//! <base>/log.bin        one record per completed iteration
//! <base>/timings.csv    wall-clock seconds per executed iteration
//! <base>/checkpoints/   see `checkpoint`
//! ```

use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;
use valrl_core::agents::{
    c51_agent, dqn_agent, implicit_quantile_agent, rainbow_agent, Agent, CategoricalConfig, DqnConfig, EnvSpec, EpsilonSchedule,
    IqnConfig,
};
use valrl_core::codec::Archive;
use valrl_core::envs::{terminal_for_replay, CatchLives, ChainMdp, Environment, StickyEnv, TerminationMode};
use valrl_core::net::OptimizerConfig;
use valrl_core::replay::ReplayScheme;
use valrl_core::rng::Stream;

use crate::checkpoint::{write_atomic, CheckpointError, Checkpointer, FaultInjector, DEFAULT_KEEP_LAST};
use crate::config::{fingerprint, ConfigError, ConfigSet, Resolver};
use crate::telemetry::{IterationStatistics, LogHeader, LogWriter, PhaseStatistics, TelemetryError, LOG_FILE};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error("agent `{agent}`: {source}")]
    Agent { agent: String, source: valrl_core::Error },
    #[error("environment: {0}")]
    Environment(valrl_core::Error),
    #[error("unknown agent `{name}` (registered: {known})")]
    UnknownAgent { name: String, known: String },
    #[error("unknown environment `{0}` (expected ChainMDP or CatchLives)")]
    UnknownEnvironment(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("checkpoint {iteration} lacks component `{component}`")]
    MissingComponent { iteration: u64, component: &'static str },
}

impl RunnerError {
    /// Whether this error is a simulated crash from a [`FaultInjector`].
    pub fn is_injected_crash(&self) -> bool {
        match self {
            RunnerError::Checkpoint(CheckpointError::Io { source, .. }) => FaultInjector::is_injected(source),
            RunnerError::Telemetry(TelemetryError::Io { source, .. }) => FaultInjector::is_injected(source),
            RunnerError::Io { source, .. } => FaultInjector::is_injected(source),
            _ => false,
        }
    }
}

fn agent_err(agent: &dyn Agent) -> impl FnOnce(valrl_core::Error) -> RunnerError + '_ {
    move |source| RunnerError::Agent { agent: agent.name().to_string(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    Train,
    #[default]
    TrainAndEval,
}

impl Schedule {
    pub fn as_str(self) -> &'static str {
        match self {
            Schedule::Train => "train",
            Schedule::TrainAndEval => "train_and_eval",
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Schedule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Schedule::Train),
            "train_and_eval" => Ok(Schedule::TrainAndEval),
            _ => Err(format!("unknown schedule `{s}` (expected train or train_and_eval)")),
        }
    }
}

/// Everything the runner reads from the `Runner` scope.
#[derive(Debug, Clone, PartialEq)]
pub struct RunnerConfig {
    pub agent_name: String,
    pub environment: String,
    pub sticky_actions: bool,
    /// ς when sticky actions are on.
    pub sticky_prob: f64,
    /// Whether evaluation phases keep the sticky wrapper active.
    pub eval_sticky_actions: bool,
    pub termination_mode: TerminationMode,
    pub schedule: Schedule,
    pub seed: u64,
    pub num_iterations: u64,
    pub training_frames: u64,
    pub evaluation_frames: u64,
    pub max_steps_per_episode: u64,
}

impl Default for RunnerConfig {
    fn default() -> Self {
        Self {
            agent_name: "dqn".into(),
            environment: "ChainMDP".into(),
            sticky_actions: true,
            sticky_prob: 0.25,
            eval_sticky_actions: true,
            termination_mode: TerminationMode::GameOver,
            schedule: Schedule::TrainAndEval,
            seed: 0,
            num_iterations: 50,
            training_frames: 2000,
            evaluation_frames: 500,
            max_steps_per_episode: 1000,
        }
    }
}

impl RunnerConfig {
    pub fn resolve(r: &mut Resolver) -> Result<Self, ConfigError> {
        let d = Self::default();
        let invalid = |param: &str, message: String| ConfigError::Invalid { path: format!("Runner.{param}"), message };
        let cfg = Self {
            agent_name: r.name("Runner", "agent_name", &d.agent_name)?,
            environment: r.name("Runner", "environment", &d.environment)?,
            sticky_actions: r.bool("Runner", "sticky_actions", d.sticky_actions)?,
            sticky_prob: r.f64("Runner", "sticky_prob", d.sticky_prob)?,
            eval_sticky_actions: r.bool("Runner", "eval_sticky_actions", d.eval_sticky_actions)?,
            termination_mode: TerminationMode::parse(&r.choice("Runner", "termination_mode", d.termination_mode.as_str(), &["GameOver", "LifeLoss"])?)
                .expect("choice checked"),
            schedule: r.choice("Runner", "schedule", d.schedule.as_str(), &["train", "train_and_eval"])?.parse().expect("choice checked"),
            seed: r.u64("Runner", "seed", d.seed)?,
            num_iterations: r.u64("Runner", "num_iterations", d.num_iterations)?,
            training_frames: r.u64("Runner", "training_frames", d.training_frames)?,
            evaluation_frames: r.u64("Runner", "evaluation_frames", d.evaluation_frames)?,
            max_steps_per_episode: r.u64("Runner", "max_steps_per_episode", d.max_steps_per_episode)?,
        };
        if !(0.0..=1.0).contains(&cfg.sticky_prob) {
            return Err(invalid("sticky_prob", format!("{} outside [0, 1]", cfg.sticky_prob)));
        }
        for (param, value) in [
            ("num_iterations", cfg.num_iterations),
            ("training_frames", cfg.training_frames),
            ("evaluation_frames", cfg.evaluation_frames),
            ("max_steps_per_episode", cfg.max_steps_per_episode),
        ] {
            if value == 0 {
                return Err(invalid(param, "must be positive".into()));
            }
        }
        Ok(cfg)
    }

    /// Effective ς of the wrapper during training.
    pub fn stickiness(&self) -> f64 {
        if self.sticky_actions {
            self.sticky_prob
        } else {
            0.0
        }
    }
}

/// Builds an agent for an environment, reading its parameters through the
/// resolver. The seed is the run's master seed.
pub type AgentFactory = Box<dyn Fn(&mut Resolver, EnvSpec, u64) -> Result<Box<dyn Agent>, RunnerError>>;

/// Agents selectable through `Runner.agent_name`.
pub struct AgentRegistry {
    entries: Vec<(String, AgentFactory)>,
}

impl fmt::Debug for AgentRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AgentRegistry").field("names", &self.names()).finish()
    }
}

impl Default for AgentRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl AgentRegistry {
    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    /// `dqn`, `c51`, `rainbow` and `iqn`.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("dqn", |res, spec, seed| {
            let cfg = resolve_dqn_config(res, "DQNAgent", DqnConfig::default())?;
            Ok(Box::new(dqn_agent(spec, cfg, seed).map_err(|source| RunnerError::Agent { agent: "dqn".into(), source })?))
        });
        r.register("c51", |res, spec, seed| {
            let cfg = resolve_dqn_config(res, "C51Agent", c51_defaults())?;
            let cat = resolve_categorical(res, "C51Agent")?;
            Ok(Box::new(c51_agent(spec, cfg, cat, seed).map_err(|source| RunnerError::Agent { agent: "c51".into(), source })?))
        });
        r.register("rainbow", |res, spec, seed| {
            let cfg = resolve_dqn_config(res, "RainbowAgent", rainbow_defaults())?;
            let cat = resolve_categorical(res, "RainbowAgent")?;
            Ok(Box::new(rainbow_agent(spec, cfg, cat, seed).map_err(|source| RunnerError::Agent { agent: "rainbow".into(), source })?))
        });
        r.register("iqn", |res, spec, seed| {
            let cfg = resolve_dqn_config(res, "ImplicitQuantileAgent", iqn_defaults())?;
            let iqn = resolve_iqn(res, "ImplicitQuantileAgent")?;
            Ok(Box::new(implicit_quantile_agent(spec, cfg, iqn, seed).map_err(|source| RunnerError::Agent { agent: "iqn".into(), source })?))
        });
        r
    }

    /// Adds or replaces the factory for `name`.
    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&mut Resolver, EnvSpec, u64) -> Result<Box<dyn Agent>, RunnerError> + 'static,
    {
        self.entries.retain(|(n, _)| n != name);
        self.entries.push((name.to_string(), Box::new(factory)));
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn create(&self, name: &str, resolver: &mut Resolver, spec: EnvSpec, seed: u64) -> Result<Box<dyn Agent>, RunnerError> {
        let (_, factory) = self
            .entries
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| RunnerError::UnknownAgent { name: name.to_string(), known: self.names().join(", ") })?;
        factory(resolver, spec, seed)
    }
}

/// Rainbow's own defaults: 3-step returns and prioritized replay.
pub fn rainbow_defaults() -> DqnConfig {
    DqnConfig { update_horizon: 3, replay_scheme: ReplayScheme::Prioritized, ..DqnConfig::default() }
}

pub fn c51_defaults() -> DqnConfig {
    valrl_core::agents::c51_parametrize(rainbow_defaults())
}

/// IQN keeps 3-step returns but samples uniformly.
pub fn iqn_defaults() -> DqnConfig {
    DqnConfig { update_horizon: 3, ..DqnConfig::default() }
}

/// Reads every `DqnConfig` field from `scope`. There is no inheritance
/// between agent scopes: `RainbowAgent.gamma` does not fall back to
/// `DQNAgent.gamma`.
pub fn resolve_dqn_config(r: &mut Resolver, scope: &str, d: DqnConfig) -> Result<DqnConfig, ConfigError> {
    let epsilon_fn = r.choice(scope, "epsilon_fn", d.epsilon_fn.as_str(), &["linearly_decaying_epsilon", "constant_epsilon"])?;
    let replay_scheme = r.choice(scope, "replay_scheme", d.replay_scheme.as_str(), &["uniform", "prioritized"])?;
    let default_optimizer = match d.optimizer {
        OptimizerConfig::Adam { .. } => "Adam",
        OptimizerConfig::RmsProp { .. } => "RMSProp",
    };
    let optimizer = r.choice(scope, "optimizer", default_optimizer, &["Adam", "RMSProp"])?;
    let cfg = DqnConfig {
        gamma: r.f64(scope, "gamma", d.gamma)?,
        update_horizon: r.usize(scope, "update_horizon", d.update_horizon)?,
        min_replay_history: r.u64(scope, "min_replay_history", d.min_replay_history)?,
        update_period: r.u64(scope, "update_period", d.update_period)?,
        target_update_period: r.u64(scope, "target_update_period", d.target_update_period)?,
        epsilon_train: r.f64(scope, "epsilon_train", d.epsilon_train)?,
        epsilon_eval: r.f64(scope, "epsilon_eval", d.epsilon_eval)?,
        epsilon_decay_period: r.u64(scope, "epsilon_decay_period", d.epsilon_decay_period)?,
        epsilon_fn: EpsilonSchedule::parse(&epsilon_fn).expect("choice checked"),
        replay_capacity: r.usize(scope, "replay_capacity", d.replay_capacity)?,
        replay_scheme: if replay_scheme == "prioritized" { ReplayScheme::Prioritized } else { ReplayScheme::Uniform },
        batch_size: r.usize(scope, "batch_size", d.batch_size)?,
        stack_size: r.usize(scope, "stack_size", d.stack_size)?,
        hidden_units: r.usize(scope, "hidden_units", d.hidden_units)?,
        optimizer: resolve_optimizer(r, &optimizer)?,
        importance_exponent: r.f64(scope, "importance_exponent", d.importance_exponent)?,
        priority_exponent: r.f64(scope, "priority_exponent", d.priority_exponent)?,
        priority_floor: r.f64(scope, "priority_floor", d.priority_floor)?,
    };
    cfg.validate().map_err(|e| ConfigError::Invalid { path: scope.to_string(), message: e.to_string() })?;
    Ok(cfg)
}

/// Reads the `Adam` or `RMSProp` scope.
pub fn resolve_optimizer(r: &mut Resolver, name: &str) -> Result<OptimizerConfig, ConfigError> {
    Ok(match name {
        "RMSProp" => OptimizerConfig::RmsProp {
            learning_rate: r.f64("RMSProp", "learning_rate", 2.5e-4)?,
            decay: r.f64("RMSProp", "decay", 0.95)?,
            epsilon: r.f64("RMSProp", "epsilon", 1e-5)?,
            centered: r.bool("RMSProp", "centered", true)?,
        },
        _ => OptimizerConfig::Adam {
            learning_rate: r.f64("Adam", "learning_rate", 1e-3)?,
            beta1: r.f64("Adam", "beta1", 0.9)?,
            beta2: r.f64("Adam", "beta2", 0.999)?,
            epsilon: r.f64("Adam", "epsilon", 1e-8)?,
        },
    })
}

pub fn resolve_categorical(r: &mut Resolver, scope: &str) -> Result<CategoricalConfig, ConfigError> {
    let d = CategoricalConfig::default();
    let cfg = CategoricalConfig {
        num_atoms: r.usize(scope, "num_atoms", d.num_atoms)?,
        v_min: r.f64(scope, "v_min", d.v_min)?,
        v_max: r.f64(scope, "v_max", d.v_max)?,
    };
    cfg.validate().map_err(|e| ConfigError::Invalid { path: scope.to_string(), message: e.to_string() })?;
    Ok(cfg)
}

pub fn resolve_iqn(r: &mut Resolver, scope: &str) -> Result<IqnConfig, ConfigError> {
    let d = IqnConfig::default();
    let cfg = IqnConfig {
        num_tau_samples: r.usize(scope, "num_tau_samples", d.num_tau_samples)?,
        num_tau_prime_samples: r.usize(scope, "num_tau_prime_samples", d.num_tau_prime_samples)?,
        num_quantile_samples: r.usize(scope, "num_quantile_samples", d.num_quantile_samples)?,
        embedding_dim: r.usize(scope, "quantile_embedding_dim", d.embedding_dim)?,
        kappa: r.f64(scope, "kappa", d.kappa)?,
    };
    cfg.validate().map_err(|e| ConfigError::Invalid { path: scope.to_string(), message: e.to_string() })?;
    Ok(cfg)
}

pub type RunnerEnv = StickyEnv<Box<dyn Environment>>;

/// Builds the configured environment inside the sticky-action wrapper. The
/// wrapper is always present (ς = 0 when sticky actions are off) so the
/// random streams consumed do not depend on the setting.
pub fn create_environment(r: &mut Resolver, cfg: &RunnerConfig) -> Result<RunnerEnv, RunnerError> {
    let inner: Box<dyn Environment> = match cfg.environment.as_str() {
        "ChainMDP" => {
            let n = r.usize("ChainMDP", "num_states", 10)?;
            Box::new(ChainMdp::new(n).map_err(RunnerError::Environment)?)
        }
        "CatchLives" => Box::new(CatchLives::new(Stream::derive(cfg.seed, "env"))),
        other => return Err(RunnerError::UnknownEnvironment(other.to_string())),
    };
    StickyEnv::new(inner, cfg.stickiness(), Stream::derive(cfg.seed, "env/sticky")).map_err(RunnerError::Environment)
}

/// Plays one game from a fresh reset. Returns the undiscounted return and
/// the number of steps.
///
/// The episode ends at game over or after `max_steps`. In `LifeLoss` mode a
/// lost life closes the agent's episode (a replay terminal) and opens a new
/// one on the next observation without resetting the environment.
pub fn run_one_episode(agent: &mut dyn Agent, env: &mut dyn Environment, mode: TerminationMode, max_steps: u64) -> Result<(f64, u64), RunnerError> {
    let observation = env.reset();
    let mut action = agent.begin_episode(&observation).map_err(agent_err(agent))?;
    let mut total = 0.0;
    let mut steps = 0;
    loop {
        let result = env.step(action).map_err(RunnerError::Environment)?;
        total += result.reward;
        steps += 1;
        if result.game_over || steps >= max_steps {
            agent.end_episode(result.reward).map_err(agent_err(agent))?;
            return Ok((total, steps));
        }
        if terminal_for_replay(&result, mode) {
            agent.end_episode(result.reward).map_err(agent_err(agent))?;
            action = agent.begin_episode(&result.observation).map_err(agent_err(agent))?;
        } else {
            action = agent.step(result.reward, &result.observation).map_err(agent_err(agent))?;
        }
    }
}

/// Runs whole episodes until at least `min_frames` steps have been taken.
pub fn run_phase(agent: &mut dyn Agent, env: &mut dyn Environment, mode: TerminationMode, max_steps: u64, min_frames: u64) -> Result<PhaseStatistics, RunnerError> {
    let mut phase = PhaseStatistics::default();
    while phase.frames < min_frames {
        let (ret, len) = run_one_episode(agent, env, mode, max_steps)?;
        phase.push(ret, len);
    }
    Ok(phase)
}

/// One training phase and, under `train_and_eval`, one evaluation phase with
/// the agent in eval mode.
pub fn run_one_iteration<E: Environment>(agent: &mut dyn Agent, env: &mut StickyEnv<E>, cfg: &RunnerConfig, iteration: u64) -> Result<IterationStatistics, RunnerError> {
    let start = Instant::now();
    agent.set_eval_mode(false);
    let train = run_phase(agent, env, cfg.termination_mode, cfg.max_steps_per_episode, cfg.training_frames)?;
    let eval = match cfg.schedule {
        Schedule::Train => None,
        Schedule::TrainAndEval => {
            let stickiness = env.stickiness();
            if !cfg.eval_sticky_actions {
                env.set_stickiness(0.0).map_err(RunnerError::Environment)?;
            }
            agent.set_eval_mode(true);
            let eval = run_phase(agent, env, cfg.termination_mode, cfg.max_steps_per_episode, cfg.evaluation_frames);
            agent.set_eval_mode(false);
            env.set_stickiness(stickiness).map_err(RunnerError::Environment)?;
            Some(eval?)
        }
    };
    Ok(IterationStatistics { iteration, train, eval, wall_clock: start.elapsed() })
}

/// Keys that do not change what an iteration computes, left out of the
/// configuration fingerprint so a run can be extended or re-tuned for
/// retention without invalidating its log.
const BOOKKEEPING_KEYS: [&str; 2] = ["Runner.num_iterations", "Checkpointer.keep_last"];

fn fingerprint_without(dump: &str, skip: &[&str]) -> u64 {
    let kept: Vec<&str> = dump
        .lines()
        .filter(|line| !skip.iter().any(|k| line.split('=').next().map(str::trim) == Some(*k)))
        .collect();
    fingerprint(&kept.join("\n"))
}

const RUNNER_STATE_FORMAT: u64 = 1;

/// A configured experiment bound to its base directory.
pub struct Runner {
    cfg: RunnerConfig,
    base_dir: PathBuf,
    agent: Box<dyn Agent>,
    env: RunnerEnv,
    checkpointer: Checkpointer,
    log: LogWriter,
    header: LogHeader,
    next_iteration: u64,
}

impl fmt::Debug for Runner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Runner").field("cfg", &self.cfg).field("base_dir", &self.base_dir).field("next_iteration", &self.next_iteration).finish()
    }
}

impl Runner {
    pub fn new(base_dir: &Path, config: &ConfigSet, registry: &AgentRegistry) -> Result<Self, RunnerError> {
        Self::with_faults(base_dir, config, registry, FaultInjector::disabled())
    }

    /// Builds the experiment and resumes from the newest valid checkpoint in
    /// `base_dir`, if any. `faults` arms every file write of the run.
    pub fn with_faults(base_dir: &Path, config: &ConfigSet, registry: &AgentRegistry, faults: FaultInjector) -> Result<Self, RunnerError> {
        let mut resolver = Resolver::new(config);
        let cfg = RunnerConfig::resolve(&mut resolver)?;
        let keep_last = resolver.usize("Checkpointer", "keep_last", DEFAULT_KEEP_LAST)?;
        let mut env = create_environment(&mut resolver, &cfg)?;
        let mut agent = registry.create(&cfg.agent_name, &mut resolver, EnvSpec::of(&env), cfg.seed)?;
        resolver.warn_unused();
        let dump = resolver.dump();

        fs::create_dir_all(base_dir).map_err(|source| RunnerError::Io { path: base_dir.to_path_buf(), source })?;
        let checkpointer = Checkpointer::new(base_dir, keep_last)?.with_faults(faults.clone());

        let mut next_iteration = 0;
        if let Some(restored) = checkpointer.restore_latest()? {
            let part = |component: &'static str| {
                restored.component(component).ok_or(RunnerError::MissingComponent { iteration: restored.iteration, component })
            };
            agent.unbundle(part("agent")?).map_err(agent_err(agent.as_ref()))?;
            env.load_state(part("environment")?).map_err(RunnerError::Environment)?;
            let state = Archive::decode(part("runner")?).map_err(RunnerError::Environment)?;
            let fields = state.u64s_exact("runner", 2).map_err(RunnerError::Environment)?;
            if fields[0] != RUNNER_STATE_FORMAT || fields[1] != restored.iteration {
                return Err(RunnerError::Environment(valrl_core::Error::Decode(format!("runner state {fields:?} does not match checkpoint {}", restored.iteration))));
            }
            next_iteration = restored.iteration + 1;
            log::info!("resuming {} after iteration {}", base_dir.display(), restored.iteration);
        }

        let mut seedless = BOOKKEEPING_KEYS.to_vec();
        seedless.push("Runner.seed");
        let header = LogHeader {
            run_id: format!("{}-{}-seed{}", cfg.environment, cfg.agent_name, cfg.seed),
            config_fingerprint: fingerprint_without(&dump, &BOOKKEEPING_KEYS),
            seedless_fingerprint: fingerprint_without(&dump, &seedless),
            environment: cfg.environment.clone(),
            agent: cfg.agent_name.clone(),
            config_text: dump,
        };
        let log = LogWriter::open(&base_dir.join(LOG_FILE), &header, next_iteration, faults.clone())?;
        let config_path = base_dir.join("config.gin");
        write_atomic(&config_path, header.config_text.as_bytes(), &faults).map_err(|source| RunnerError::Io { path: config_path, source })?;
        Ok(Self { cfg, base_dir: base_dir.to_path_buf(), agent, env, checkpointer, log, header, next_iteration })
    }

    pub fn config(&self) -> &RunnerConfig {
        &self.cfg
    }

    pub fn header(&self) -> &LogHeader {
        &self.header
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn agent(&self) -> &dyn Agent {
        self.agent.as_ref()
    }

    pub fn agent_mut(&mut self) -> &mut dyn Agent {
        self.agent.as_mut()
    }

    pub fn environment(&self) -> &RunnerEnv {
        &self.env
    }

    /// Index of the next iteration to run.
    pub fn next_iteration(&self) -> u64 {
        self.next_iteration
    }

    pub fn is_complete(&self) -> bool {
        self.next_iteration >= self.cfg.num_iterations
    }

    /// Runs, logs and checkpoints the next iteration.
    pub fn run_next_iteration(&mut self) -> Result<IterationStatistics, RunnerError> {
        let i = self.next_iteration;
        let stats = run_one_iteration(self.agent.as_mut(), &mut self.env, &self.cfg, i)?;
        self.log.append(&stats)?;
        let agent = self.agent.bundle().map_err(agent_err(self.agent.as_ref()))?;
        let environment = self.env.save_state();
        let mut runner = Archive::new();
        runner.push_u64("runner", vec![RUNNER_STATE_FORMAT, i]).map_err(RunnerError::Environment)?;
        let runner = runner.encode();
        self.checkpointer.save(i, &[("agent", &agent), ("environment", &environment), ("runner", &runner)])?;
        self.checkpointer.garbage_collect()?;
        self.next_iteration = i + 1;
        self.record_timing(&stats);
        log::info!(
            "iteration {i}: train return {:.3} over {} episodes{}",
            stats.train.mean_return().unwrap_or(f64::NAN),
            stats.train.episodes(),
            stats.eval.as_ref().map_or(String::new(), |e| format!(", eval return {:.3}", e.mean_return().unwrap_or(f64::NAN)))
        );
        Ok(stats)
    }

    /// Best effort: timings are diagnostic and never block a run.
    fn record_timing(&self, stats: &IterationStatistics) {
        let path = self.base_dir.join("timings.csv");
        let fresh = !path.exists();
        let result = OpenOptions::new().create(true).append(true).open(&path).and_then(|mut f| {
            if fresh {
                f.write_all(b"iteration,seconds\n")?;
            }
            writeln!(f, "{},{}", stats.iteration, stats.wall_clock.as_secs_f64())
        });
        if let Err(e) = result {
            log::warn!("{}: {e}", path.display());
        }
    }

    /// Runs the remaining iterations, or until `stop_before` if that comes
    /// first. Returns the statistics of the iterations run by this call.
    pub fn run_until(&mut self, stop_before: u64) -> Result<Vec<IterationStatistics>, RunnerError> {
        let mut out = Vec::new();
        while self.next_iteration < self.cfg.num_iterations.min(stop_before) {
            out.push(self.run_next_iteration()?);
        }
        Ok(out)
    }

    pub fn run_experiment(&mut self) -> Result<Vec<IterationStatistics>, RunnerError> {
        self.run_until(u64::MAX)
    }
}
