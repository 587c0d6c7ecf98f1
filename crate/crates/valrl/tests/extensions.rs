//! The example agents, driven through the public API only.

#[path = "../examples/random_dqn/agent.rs"]
mod random_dqn;
#[path = "../examples/sticky_agent/agent.rs"]
mod sticky_agent;

use std::cell::RefCell;
use std::rc::Rc;

use valrl::config::parse_config;
use valrl::core::agents::Agent;
use valrl::core::envs::{ChainMdp, Environment, Observation, StepResult, TerminationMode};
use valrl::core::rng::Stream;
use valrl::runner::{run_phase, AgentRegistry, Runner, RunnerError};
use valrl::telemetry::{ExperimentLog, LOG_FILE};

use sticky_agent::StickyAgent;

fn registry() -> AgentRegistry {
    let mut r = AgentRegistry::with_builtins();
    random_dqn::register(&mut r);
    sticky_agent::register(&mut r);
    r
}

/// Uniform random walk on a 10-state chain from state 0, cut at 40 steps:
/// probability of reaching the last state.
fn random_walk_success(sims: usize) -> f64 {
    let mut rng = Stream::derive(99, "walk");
    let mut hits = 0;
    for _ in 0..sims {
        let mut s = 0usize;
        for _ in 0..40 {
            s = if rng.below(2) == 1 { s + 1 } else { s.saturating_sub(1) };
            if s == 9 {
                hits += 1;
                break;
            }
        }
    }
    hits as f64 / sims as f64
}

#[test]
fn random_dqn_matches_random_policy_value() {
    let dir = tempfile::tempdir().unwrap();
    let config = parse_config(
        "Runner.agent_name = @random_dqn\nRunner.sticky_actions = False\nRunner.num_iterations = 3\n\
         RandomDQNAgent.min_replay_history = 500\nRandomDQNAgent.stack_size = 1\nRandomDQNAgent.hidden_units = 16\n\
         RandomDQNAgent.replay_capacity = 10000",
        "test",
    )
    .unwrap();
    Runner::new(dir.path(), &config, &registry()).unwrap().run_experiment().unwrap();
    let log = ExperimentLog::read(&dir.path().join(LOG_FILE)).unwrap();
    let returns: Vec<f64> = log
        .records
        .iter()
        .flat_map(|r| r.train.returns.iter().chain(r.eval.iter().flat_map(|e| e.returns.iter())).copied())
        .collect();
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let p = random_walk_success(200_000);
    let se = (p * (1.0 - p) / n).sqrt() + (p * (1.0 - p) / 200_000.0).sqrt();
    assert!((mean - p).abs() < 3.0 * se, "random_dqn mean {mean} over {n} episodes, random walk {p}");
}

struct Recorder {
    inner: ChainMdp,
    actions: Rc<RefCell<Vec<usize>>>,
}

impl Environment for Recorder {
    fn name(&self) -> &'static str {
        "ChainMDP"
    }
    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }
    fn frame_shape(&self) -> (usize, usize) {
        self.inner.frame_shape()
    }
    fn reset(&mut self) -> Observation {
        self.inner.reset()
    }
    fn step(&mut self, action: usize) -> valrl::core::Result<StepResult> {
        self.actions.borrow_mut().push(action);
        self.inner.step(action)
    }
    fn save_state(&self) -> Vec<u8> {
        self.inner.save_state()
    }
    fn load_state(&mut self, bytes: &[u8]) -> valrl::core::Result<()> {
        self.inner.load_state(bytes)
    }
}

#[test]
fn certain_repetition_fixes_the_first_action() {
    let actions = Rc::new(RefCell::new(Vec::new()));
    let mut env = Recorder { inner: ChainMdp::new(10).unwrap(), actions: actions.clone() };
    let mut agent = StickyAgent::new(2, 1.0, 5).unwrap();
    let phase = run_phase(&mut agent, &mut env, TerminationMode::GameOver, 5, 200).unwrap();
    let actions = actions.borrow();
    assert!(actions.iter().all(|&a| a == actions[0]));
    // Five steps never reach the goal, so every episode ends at the cap.
    assert!(phase.lengths.iter().all(|&l| l == 5), "{:?}", phase.lengths);
}

#[test]
fn extension_agents_bundle_without_loss() {
    let reg = registry();
    for name in ["random_dqn", "sticky_agent"] {
        let text = format!(
            "Runner.agent_name = @{name}\nRunner.sticky_actions = False\nRunner.num_iterations = 2\nRunner.training_frames = 300\n\
             Runner.evaluation_frames = 50\nRandomDQNAgent.min_replay_history = 100\nRandomDQNAgent.stack_size = 1\n\
             RandomDQNAgent.hidden_units = 8\nRandomDQNAgent.replay_capacity = 2000"
        );
        let config = parse_config(&text, "test").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let mut runner = Runner::new(dir.path(), &config, &reg).unwrap();
        runner.run_next_iteration().unwrap();
        let saved = runner.agent().bundle().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let mut other = Runner::new(dir2.path(), &config, &reg).unwrap();
        other.agent_mut().unbundle(&saved).unwrap();
        assert_eq!(other.agent().bundle().unwrap(), saved, "{name}");
        // Identical state, identical behavior.
        let obs = ChainMdp::new(10).unwrap().reset();
        let a: Vec<usize> = (0..20).map(|_| runner.agent_mut().step(0.0, &obs).unwrap()).collect();
        let b: Vec<usize> = (0..20).map(|_| other.agent_mut().step(0.0, &obs).unwrap()).collect();
        assert_eq!(a, b, "{name}");
    }
}

/// Implements only acting; checkpointing is left at the trait defaults.
struct NoBundle;

impl Agent for NoBundle {
    fn name(&self) -> &str {
        "no_bundle"
    }
    fn begin_episode(&mut self, _observation: &Observation) -> valrl::core::Result<usize> {
        Ok(1)
    }
    fn step(&mut self, _reward: f64, _observation: &Observation) -> valrl::core::Result<usize> {
        Ok(1)
    }
    fn end_episode(&mut self, _reward: f64) -> valrl::core::Result<()> {
        Ok(())
    }
    fn set_eval_mode(&mut self, _eval: bool) {}
    fn eval_mode(&self) -> bool {
        false
    }
}

#[test]
fn missing_capability_is_named() {
    let mut reg = AgentRegistry::with_builtins();
    reg.register("no_bundle", |_, _, _| Ok(Box::new(NoBundle)));
    let config = parse_config("Runner.agent_name = @no_bundle\nRunner.num_iterations = 1", "test").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let err = Runner::new(dir.path(), &config, &reg).unwrap().run_next_iteration().unwrap_err();
    assert!(matches!(err, RunnerError::Agent { .. }), "{err}");
    assert!(err.to_string().contains("bundle"), "{err}");
}
