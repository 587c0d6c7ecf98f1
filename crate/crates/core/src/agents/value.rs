use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{
    c51_parametrize, linearly_decaying_epsilon, ActionPolicy, Agent, CategoricalConfig, CategoricalHead, DqnConfig, DqnHead,
    EnvSpec, EpsilonGreedy, EpsilonSchedule, IqnConfig, QuantileHead, ValueHead,
};
use crate::codec::Archive;
use crate::envs::{FrameStack, Observation};
use crate::net::{OptimizerState, ParameterSet};
use crate::replay::{ReplayConfig, ReplayScheme, TransitionStore};
use crate::rng::Stream;
use crate::{Error, Result};

const BUNDLE_FORMAT: u64 = 1;

/// Learning counters of a [`ValueAgent`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AgentCounters {
    /// Calls to [`ValueAgent::train_step`], one per training-mode action.
    pub training_steps: u64,
    pub gradient_updates: u64,
    pub target_syncs: u64,
}

/// Replay-based value learner shared by every built-in agent.
///
/// Each training-mode action is preceded by one [`ValueAgent::train_step`].
/// Call `s` (0-based) performs a gradient update when
/// `s ≥ min_replay_history` and `(s − min_replay_history + 1)` is a multiple
/// of `update_period`; the target network is replaced by the online network
/// whenever the call count reaches a multiple of `target_update_period`.
#[derive(Debug, Clone)]
pub struct ValueAgent<H, P = EpsilonGreedy> {
    name: String,
    spec: EnvSpec,
    cfg: DqnConfig,
    head: H,
    policy: P,
    online: ParameterSet,
    target: ParameterSet,
    optimizer: OptimizerState,
    replay: TransitionStore,
    stack: FrameStack,
    exploration_rng: Stream,
    replay_rng: Stream,
    tau_rng: Stream,
    counters: AgentCounters,
    eval: bool,
    action: usize,
    last_loss: Option<f64>,
}

pub type DqnAgent = ValueAgent<DqnHead>;
pub type C51Agent = ValueAgent<CategoricalHead>;
pub type RainbowAgent = ValueAgent<CategoricalHead>;
pub type ImplicitQuantileAgent = ValueAgent<QuantileHead>;

pub fn dqn_agent(spec: EnvSpec, cfg: DqnConfig, seed: u64) -> Result<DqnAgent> {
    let head = DqnHead::new(cfg.stack_size * spec.frame_len(), cfg.hidden_units, spec.num_actions)?;
    ValueAgent::new("dqn", spec, cfg, head, seed)
}

pub fn rainbow_agent(spec: EnvSpec, cfg: DqnConfig, categorical: CategoricalConfig, seed: u64) -> Result<RainbowAgent> {
    let head = CategoricalHead::new(cfg.stack_size * spec.frame_len(), cfg.hidden_units, spec.num_actions, categorical)?;
    ValueAgent::new("rainbow", spec, cfg, head, seed)
}

/// Rainbow with single-step returns and uniform replay.
pub fn c51_agent(spec: EnvSpec, cfg: DqnConfig, categorical: CategoricalConfig, seed: u64) -> Result<C51Agent> {
    let mut agent = rainbow_agent(spec, c51_parametrize(cfg), categorical, seed)?;
    agent.name = "c51".to_string();
    Ok(agent)
}

pub fn implicit_quantile_agent(spec: EnvSpec, cfg: DqnConfig, iqn: IqnConfig, seed: u64) -> Result<ImplicitQuantileAgent> {
    let head = QuantileHead::new(cfg.stack_size * spec.frame_len(), cfg.hidden_units, spec.num_actions, iqn)?;
    ValueAgent::new("iqn", spec, cfg, head, seed)
}

impl<H: ValueHead> ValueAgent<H> {
    pub fn new(name: &str, spec: EnvSpec, cfg: DqnConfig, head: H, seed: u64) -> Result<Self> {
        Self::with_policy(name, spec, cfg, head, EpsilonGreedy, seed)
    }
}

impl<H: ValueHead, P: ActionPolicy> ValueAgent<H, P> {
    /// Builds an agent whose action selection is delegated to `policy`.
    pub fn with_policy(name: &str, spec: EnvSpec, cfg: DqnConfig, head: H, policy: P, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if spec.num_actions == 0 || spec.frame_len() == 0 {
            return Err(crate::error::contract("environment must have actions and non-empty frames"));
        }
        let mut init_rng = Stream::derive(seed, "agent/init");
        let online = head.init_params(&mut init_rng)?;
        let replay = TransitionStore::new(ReplayConfig {
            capacity: cfg.replay_capacity,
            stack_size: cfg.stack_size,
            update_horizon: cfg.update_horizon,
            gamma: cfg.gamma,
            frame_width: spec.frame_width,
            frame_height: spec.frame_height,
        })?;
        Ok(Self {
            name: name.to_string(),
            spec,
            head,
            policy,
            optimizer: OptimizerState::new(cfg.optimizer, &online),
            target: online.clone(),
            online,
            replay,
            stack: FrameStack::new(cfg.stack_size, spec.frame_width, spec.frame_height),
            exploration_rng: Stream::derive(seed, "agent/exploration"),
            replay_rng: Stream::derive(seed, "agent/replay"),
            tau_rng: Stream::derive(seed, "agent/tau"),
            counters: AgentCounters::default(),
            eval: false,
            action: 0,
            last_loss: None,
            cfg,
        })
    }

    pub fn config(&self) -> &DqnConfig {
        &self.cfg
    }

    pub fn env_spec(&self) -> EnvSpec {
        self.spec
    }

    pub fn head(&self) -> &H {
        &self.head
    }

    pub fn counters(&self) -> AgentCounters {
        self.counters
    }

    pub fn online_params(&self) -> &ParameterSet {
        &self.online
    }

    pub fn target_params(&self) -> &ParameterSet {
        &self.target
    }

    pub fn replay(&self) -> &TransitionStore {
        &self.replay
    }

    /// Batch loss of the most recent gradient update.
    pub fn last_loss(&self) -> Option<f64> {
        self.last_loss
    }

    /// Exploration rate the next action will be chosen with.
    pub fn epsilon(&self) -> f64 {
        if self.eval {
            return self.cfg.epsilon_eval;
        }
        match self.cfg.epsilon_fn {
            EpsilonSchedule::Constant => self.cfg.epsilon_train,
            EpsilonSchedule::LinearDecay => linearly_decaying_epsilon(
                self.cfg.epsilon_decay_period,
                self.counters.training_steps,
                self.cfg.min_replay_history,
                self.cfg.epsilon_train,
            ),
        }
    }

    /// Values of the current stacked state under the online network.
    pub fn current_values(&mut self) -> Result<Vec<f64>> {
        let mut state = Vec::with_capacity(self.cfg.stack_size * self.spec.frame_len());
        self.stack.write_input(&mut state);
        self.head.action_values(&self.online, &state, &mut self.tau_rng)
    }

    fn select_action(&mut self) -> Result<usize> {
        let epsilon = self.epsilon();
        let mut state = Vec::with_capacity(self.cfg.stack_size * self.spec.frame_len());
        self.stack.write_input(&mut state);
        let (head, online, tau_rng) = (&self.head, &self.online, &mut self.tau_rng);
        let mut values = || head.action_values(online, &state, tau_rng);
        let action = self.policy.select_action(epsilon, self.spec.num_actions, &mut self.exploration_rng, &mut values)?;
        if action >= self.spec.num_actions {
            return Err(crate::error::contract(alloc::format!("policy chose action {action} of {}", self.spec.num_actions)));
        }
        self.action = action;
        Ok(action)
    }

    /// One training-mode tick: maybe a gradient update, maybe a target sync.
    pub fn train_step(&mut self) -> Result<()> {
        let s = self.counters.training_steps;
        let warmup = self.cfg.min_replay_history;
        if s >= warmup && (s - warmup + 1) % self.cfg.update_period == 0 {
            self.learn()?;
        }
        self.counters.training_steps += 1;
        if self.counters.training_steps % self.cfg.target_update_period == 0 {
            self.target.clone_from(&self.online);
            self.counters.target_syncs += 1;
        }
        Ok(())
    }

    fn learn(&mut self) -> Result<()> {
        let batch = match self.cfg.replay_scheme {
            ReplayScheme::Uniform => self.replay.sample_uniform(self.cfg.batch_size, &mut self.replay_rng),
            ReplayScheme::Prioritized => self.replay.sample_prioritized(self.cfg.batch_size, &mut self.replay_rng),
        };
        let batch = match batch {
            Ok(batch) => batch,
            Err(Error::NotReady(_)) | Err(Error::NoMass) => return Ok(()),
            Err(e) => return Err(e),
        };
        let weights = match self.cfg.replay_scheme {
            ReplayScheme::Uniform => alloc::vec![1.0; batch.len()],
            ReplayScheme::Prioritized => batch.importance_weights(self.cfg.importance_exponent),
        };
        let out = self.head.loss(&self.online, &self.target, &batch, &weights, &mut self.tau_rng)?;
        if !out.batch_loss.is_finite() {
            return Err(Error::NonFinite(alloc::format!(
                "{} loss at training step {}",
                self.name, self.counters.training_steps
            )));
        }
        self.optimizer.apply(&mut self.online, &out.grads)?;
        if self.cfg.replay_scheme == ReplayScheme::Prioritized {
            let priorities: Vec<f64> = out
                .per_sample
                .iter()
                .map(|&l| libm::pow(l, self.cfg.priority_exponent).max(self.cfg.priority_floor))
                .collect();
            self.replay.set_priorities(&batch.indices, &priorities)?;
        }
        self.counters.gradient_updates += 1;
        self.last_loss = Some(out.batch_loss);
        Ok(())
    }

    fn check_observation(&self, obs: &Observation) -> Result<()> {
        if (obs.width(), obs.height()) != (self.spec.frame_width, self.spec.frame_height) {
            return Err(crate::error::contract(alloc::format!(
                "observation is {}x{}, agent expects {}x{}",
                obs.width(),
                obs.height(),
                self.spec.frame_width,
                self.spec.frame_height
            )));
        }
        Ok(())
    }

    fn to_archive(&self) -> Result<Archive> {
        let mut a = Archive::new();
        a.push_u8("kind", self.name.as_bytes().to_vec())?;
        let c = self.counters;
        a.push_u64(
            "counters",
            alloc::vec![
                BUNDLE_FORMAT,
                c.training_steps,
                c.gradient_updates,
                c.target_syncs,
                self.eval as u64,
                self.action as u64,
                self.last_loss.is_some() as u64,
            ],
        )?;
        a.push_f64("last_loss", alloc::vec![1], alloc::vec![self.last_loss.unwrap_or(0.0)])?;
        self.online.write_archive("online/", &mut a)?;
        self.target.write_archive("target/", &mut a)?;
        self.optimizer.write_archive("optimizer/", &mut a)?;
        a.push_u8("rng/exploration", self.exploration_rng.to_bytes().to_vec())?;
        a.push_u8("rng/replay", self.replay_rng.to_bytes().to_vec())?;
        a.push_u8("rng/tau", self.tau_rng.to_bytes().to_vec())?;
        a.push_u8("stack", self.stack.raw_frames().flatten().copied().collect())?;
        a.push_u8("replay", self.replay.checkpoint())?;
        Ok(a)
    }

    fn restore_archive(&mut self, a: &Archive) -> Result<()> {
        let kind = a.u8s("kind")?;
        if kind != self.name.as_bytes() {
            return Err(Error::Decode(alloc::format!(
                "bundle is for agent `{}`, not `{}`",
                String::from_utf8_lossy(kind),
                self.name
            )));
        }
        let counters = a.u64s_exact("counters", 7)?;
        if counters[0] != BUNDLE_FORMAT {
            return Err(Error::Decode(alloc::format!("agent bundle format {} unsupported", counters[0])));
        }
        let replay = TransitionStore::restore(a.u8s("replay")?)?;
        if replay.config() != self.replay.config() {
            return Err(Error::Decode("bundle replay configuration differs from this agent".into()));
        }
        let mut online = self.online.clone();
        online.read_archive("online/", a)?;
        let mut target = self.target.clone();
        target.read_archive("target/", a)?;
        let mut optimizer = self.optimizer.clone();
        optimizer.read_archive("optimizer/", a)?;
        let mut stack = self.stack.clone();
        if !stack.set_raw_frames(a.u8s("stack")?) {
            return Err(Error::Decode("frame stack has the wrong size".into()));
        }
        let exploration_rng = Stream::from_bytes(a.u8s("rng/exploration")?)?;
        let replay_rng = Stream::from_bytes(a.u8s("rng/replay")?)?;
        let tau_rng = Stream::from_bytes(a.u8s("rng/tau")?)?;
        let last_loss = match a.f64s("last_loss")? {
            [v] => (counters[6] == 1).then_some(*v),
            _ => return Err(Error::Decode("`last_loss` must be a scalar".into())),
        };
        self.counters = AgentCounters { training_steps: counters[1], gradient_updates: counters[2], target_syncs: counters[3] };
        self.eval = counters[4] == 1;
        self.action = counters[5] as usize;
        self.last_loss = last_loss;
        self.online = online;
        self.target = target;
        self.optimizer = optimizer;
        self.replay = replay;
        self.stack = stack;
        self.exploration_rng = exploration_rng;
        self.replay_rng = replay_rng;
        self.tau_rng = tau_rng;
        Ok(())
    }
}

impl<H: ValueHead, P: ActionPolicy> Agent for ValueAgent<H, P> {
    fn name(&self) -> &str {
        &self.name
    }

    fn begin_episode(&mut self, observation: &Observation) -> Result<usize> {
        self.check_observation(observation)?;
        self.stack.reset();
        self.stack.push(observation);
        if !self.eval {
            self.train_step()?;
        }
        self.select_action()
    }

    fn step(&mut self, reward: f64, observation: &Observation) -> Result<usize> {
        self.check_observation(observation)?;
        if !self.eval {
            let previous = self.stack.latest().to_vec();
            self.replay.add(&previous, self.action, reward, false)?;
        }
        self.stack.push(observation);
        if !self.eval {
            self.train_step()?;
        }
        self.select_action()
    }

    fn end_episode(&mut self, reward: f64) -> Result<()> {
        if !self.eval {
            let latest = self.stack.latest().to_vec();
            self.replay.add(&latest, self.action, reward, true)?;
        }
        Ok(())
    }

    fn set_eval_mode(&mut self, eval: bool) {
        self.eval = eval;
    }

    fn eval_mode(&self) -> bool {
        self.eval
    }

    fn bundle(&self) -> Result<Vec<u8>> {
        Ok(self.to_archive()?.encode())
    }

    fn unbundle(&mut self, bytes: &[u8]) -> Result<()> {
        self.restore_archive(&Archive::decode(bytes)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{ChainMdp, Environment};
    use crate::net::OptimizerConfig;

    fn chain_spec() -> EnvSpec {
        EnvSpec { num_actions: 2, frame_width: 5, frame_height: 1 }
    }

    fn small_cfg() -> DqnConfig {
        DqnConfig {
            min_replay_history: 20,
            update_period: 4,
            target_update_period: 10,
            epsilon_decay_period: 50,
            replay_capacity: 500,
            batch_size: 4,
            stack_size: 2,
            hidden_units: 8,
            optimizer: OptimizerConfig::adam(1e-2),
            ..DqnConfig::default()
        }
    }

    /// Runs `steps` training-mode environment steps on a 5-state chain.
    fn drive<A: Agent + ?Sized>(agent: &mut A, steps: usize, _seed: u64) {
        let mut env = ChainMdp::new(5).unwrap();
        let mut obs = env.reset();
        let mut action = agent.begin_episode(&obs).unwrap();
        for _ in 1..steps {
            let r = env.step(action).unwrap();
            if r.game_over {
                agent.end_episode(r.reward).unwrap();
                obs = env.reset();
                action = agent.begin_episode(&obs).unwrap();
            } else {
                action = agent.step(r.reward, &r.observation).unwrap();
            }
        }
    }

    #[test]
    fn counting_oracle_for_updates_and_syncs() {
        for (t, warmup, period) in [(100u64, 20u64, 4u64), (101, 20, 4), (57, 10, 3), (15, 20, 4), (200, 0, 1)] {
            let cfg = DqnConfig { min_replay_history: warmup, update_period: period, ..small_cfg() };
            let mut agent = dqn_agent(chain_spec(), cfg, 3).unwrap();
            drive(&mut agent, t as usize, 3);
            let c = agent.counters();
            assert_eq!(c.training_steps, t);
            let expected_updates = if t > warmup { (t - warmup) / period } else { 0 };
            // Updates that found no valid sample are skipped; with this warmup
            // every scheduled update has data except when warmup is tiny.
            if warmup >= 10 {
                assert_eq!(c.gradient_updates, expected_updates, "T={t} warmup={warmup} period={period}");
            } else {
                assert!(c.gradient_updates <= expected_updates);
            }
            assert_eq!(c.target_syncs, t / cfg.target_update_period);
        }
    }

    #[test]
    fn no_updates_before_min_history() {
        let mut agent = dqn_agent(chain_spec(), DqnConfig { min_replay_history: 80_000, ..small_cfg() }, 1).unwrap();
        let before = agent.online_params().clone();
        drive(&mut agent, 300, 1);
        assert_eq!(agent.counters().gradient_updates, 0);
        assert_eq!(agent.online_params(), &before);
    }

    #[test]
    fn target_is_a_past_online_snapshot() {
        let mut agent = dqn_agent(chain_spec(), small_cfg(), 4).unwrap();
        let mut env = ChainMdp::new(5).unwrap();
        let mut snapshot = agent.online_params().clone();
        let mut action = agent.begin_episode(&env.reset()).unwrap();
        for _ in 0..200 {
            let r = env.step(action).unwrap();
            let syncs = agent.counters().target_syncs;
            action = if r.game_over {
                agent.end_episode(r.reward).unwrap();
                agent.begin_episode(&env.reset()).unwrap()
            } else {
                agent.step(r.reward, &r.observation).unwrap()
            };
            if agent.counters().target_syncs != syncs {
                assert_eq!(agent.counters().training_steps % 10, 0);
                snapshot = agent.target_params().clone();
                assert_eq!(&snapshot, agent.online_params());
            }
            assert_eq!(agent.target_params(), &snapshot);
        }
        assert!(agent.counters().gradient_updates > 0);
    }

    #[test]
    fn eval_mode_neither_stores_nor_learns() {
        let mut agent = dqn_agent(chain_spec(), small_cfg(), 5).unwrap();
        agent.set_eval_mode(true);
        drive(&mut agent, 100, 5);
        assert_eq!(agent.replay().add_count(), 0);
        assert_eq!(agent.counters(), AgentCounters::default());
        assert_eq!(agent.epsilon(), small_cfg().epsilon_eval);
    }

    #[test]
    fn bundle_round_trip_is_byte_fixpoint() {
        let spec = chain_spec();
        let rainbow_cfg = DqnConfig { update_horizon: 3, replay_scheme: ReplayScheme::Prioritized, ..small_cfg() };
        let cat = CategoricalConfig { num_atoms: 5, v_min: -1.0, v_max: 1.0 };
        let iqn = IqnConfig { num_tau_samples: 2, num_tau_prime_samples: 2, num_quantile_samples: 3, embedding_dim: 4, kappa: 1.0 };
        let mut agents: Vec<alloc::boxed::Box<dyn Agent>> = alloc::vec![
            alloc::boxed::Box::new(dqn_agent(spec, small_cfg(), 1).unwrap()),
            alloc::boxed::Box::new(c51_agent(spec, small_cfg(), cat, 1).unwrap()),
            alloc::boxed::Box::new(rainbow_agent(spec, rainbow_cfg, cat, 1).unwrap()),
            alloc::boxed::Box::new(implicit_quantile_agent(spec, small_cfg(), iqn, 1).unwrap()),
        ];
        let mut fresh: Vec<alloc::boxed::Box<dyn Agent>> = alloc::vec![
            alloc::boxed::Box::new(dqn_agent(spec, small_cfg(), 2).unwrap()),
            alloc::boxed::Box::new(c51_agent(spec, small_cfg(), cat, 2).unwrap()),
            alloc::boxed::Box::new(rainbow_agent(spec, rainbow_cfg, cat, 2).unwrap()),
            alloc::boxed::Box::new(implicit_quantile_agent(spec, small_cfg(), iqn, 2).unwrap()),
        ];
        for (agent, other) in agents.iter_mut().zip(fresh.iter_mut()) {
            drive(agent, 120, 7);
            let bytes = agent.bundle().unwrap();
            other.unbundle(&bytes).unwrap();
            assert_eq!(other.bundle().unwrap(), bytes, "{}", agent.name());
            // Identical continuations after restore.
            drive(agent, 60, 8);
            drive(other, 60, 8);
            assert_eq!(agent.bundle().unwrap(), other.bundle().unwrap(), "{}", agent.name());
        }
    }

    #[test]
    fn unbundle_rejects_other_kind() {
        let spec = chain_spec();
        let dqn = dqn_agent(spec, small_cfg(), 1).unwrap();
        let mut c51 = c51_agent(spec, small_cfg(), CategoricalConfig::default(), 1).unwrap();
        let err = c51.unbundle(&dqn.bundle().unwrap()).unwrap_err();
        assert!(alloc::format!("{err}").contains("dqn"));
    }

    #[test]
    fn c51_matches_single_step_uniform_rainbow() {
        let spec = chain_spec();
        let cat = CategoricalConfig { num_atoms: 7, v_min: -1.0, v_max: 1.0 };
        let rainbow_cfg = DqnConfig { update_horizon: 1, replay_scheme: ReplayScheme::Uniform, ..small_cfg() };
        let mut c51 = c51_agent(spec, DqnConfig { update_horizon: 3, ..small_cfg() }, cat, 11).unwrap();
        let mut rainbow = rainbow_agent(spec, rainbow_cfg, cat, 11).unwrap();
        drive(&mut c51, 150, 12);
        drive(&mut rainbow, 150, 12);
        assert!(c51.counters().gradient_updates > 0);
        assert_eq!(c51.last_loss(), rainbow.last_loss());
        assert_eq!(c51.online_params(), rainbow.online_params());
    }

    #[test]
    fn chain_spec_matches_environment() {
        let env = ChainMdp::new(5).unwrap();
        assert_eq!(EnvSpec::of(&env), chain_spec());
    }
}
