use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::SumTree;
use crate::codec::Archive;
use crate::rng::Stream;
use crate::{Error, Result};

const MAX_DRAW_ATTEMPTS: usize = 1000;
const STORE_FORMAT: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayConfig {
    /// Number of frames held before the oldest are overwritten.
    pub capacity: usize,
    pub stack_size: usize,
    pub update_horizon: usize,
    pub gamma: f64,
    pub frame_width: usize,
    pub frame_height: usize,
}

impl ReplayConfig {
    pub fn frame_len(&self) -> usize {
        self.frame_width * self.frame_height
    }

    fn validate(&self) -> Result<()> {
        if self.stack_size == 0 || self.update_horizon == 0 {
            return Err(crate::error::contract("stack size and update horizon must be at least 1"));
        }
        if self.capacity <= self.stack_size + self.update_horizon {
            return Err(crate::error::contract(format!(
                "replay capacity {} must exceed stack size + update horizon ({})",
                self.capacity,
                self.stack_size + self.update_horizon
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(crate::error::contract(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if self.frame_len() == 0 {
            return Err(crate::error::contract("frames must be non-empty"));
        }
        Ok(())
    }
}

/// A sampled minibatch with n-step quantities assembled.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBatch {
    /// Flattened input length of one stacked state.
    pub state_len: usize,
    /// `[batch, state_len]`, row-major.
    pub states: Vec<f64>,
    pub actions: Vec<usize>,
    /// Σ_{j<m} γ^j r_{t+j}.
    pub n_step_returns: Vec<f64>,
    /// Stacked state at `t + m`; `[batch, state_len]`.
    pub next_states: Vec<f64>,
    pub terminal_within_n: Vec<bool>,
    /// Horizon `m ≤ n` actually used.
    pub horizons: Vec<usize>,
    pub indices: Vec<usize>,
    pub probabilities: Vec<f64>,
    /// γ^m for non-terminal samples, 0 otherwise.
    pub bootstrap_discounts: Vec<f64>,
}

impl ReplayBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn state(&self, row: usize) -> &[f64] {
        &self.states[row * self.state_len..(row + 1) * self.state_len]
    }

    pub fn next_state(&self, row: usize) -> &[f64] {
        &self.next_states[row * self.state_len..(row + 1) * self.state_len]
    }

    /// Importance weights (1/p)^β normalized by the batch maximum.
    pub fn importance_weights(&self, beta: f64) -> Vec<f64> {
        let raw: Vec<f64> = self.probabilities.iter().map(|&p| libm::pow(1.0 / p, beta)).collect();
        let max = raw.iter().cloned().fold(0.0, f64::max);
        raw.iter().map(|w| w / max).collect()
    }
}

/// Circular transition memory.
///
/// Slot `t` holds the frame observed at time `t`, the action taken, the reward
/// received and whether the transition closed an episode in replay. Frames are
/// stored once; stacks are rebuilt when sampling. Each new episode is preceded
/// by `k - 1` zero-frame padding slots so stacks are zero-padded at episode
/// start.
///
/// Sampling priorities live in a [`SumTree`]. A slot carries priority only
/// while it is a valid sample index, so every draw lands on a valid index.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionStore {
    cfg: ReplayConfig,
    frames: Vec<u8>,
    actions: Vec<u64>,
    rewards: Vec<f64>,
    terminals: Vec<bool>,
    add_count: u64,
    valid: Vec<bool>,
    num_valid: usize,
    tree: SumTree,
    max_priority: f64,
}

impl TransitionStore {
    pub fn new(cfg: ReplayConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            frames: vec![0; cfg.capacity * cfg.frame_len()],
            actions: vec![0; cfg.capacity],
            rewards: vec![0.0; cfg.capacity],
            terminals: vec![false; cfg.capacity],
            add_count: 0,
            valid: vec![false; cfg.capacity],
            num_valid: 0,
            tree: SumTree::new(cfg.capacity),
            max_priority: 1.0,
            cfg,
        })
    }

    pub fn config(&self) -> &ReplayConfig {
        &self.cfg
    }

    /// Total slots ever written, padding included.
    pub fn add_count(&self) -> u64 {
        self.add_count
    }

    pub fn len(&self) -> usize {
        (self.add_count as usize).min(self.cfg.capacity)
    }

    pub fn is_empty(&self) -> bool {
        self.add_count == 0
    }

    pub fn is_full(&self) -> bool {
        self.add_count as usize >= self.cfg.capacity
    }

    pub fn cursor(&self) -> usize {
        (self.add_count % self.cfg.capacity as u64) as usize
    }

    pub fn num_valid(&self) -> usize {
        self.num_valid
    }

    pub fn is_valid_index(&self, index: usize) -> bool {
        index < self.cfg.capacity && self.valid[index]
    }

    pub fn sum_tree(&self) -> &SumTree {
        &self.tree
    }

    pub fn max_priority(&self) -> f64 {
        self.max_priority
    }

    pub fn frame(&self, slot: usize) -> &[u8] {
        let len = self.cfg.frame_len();
        &self.frames[slot * len..(slot + 1) * len]
    }

    pub fn action(&self, slot: usize) -> usize {
        self.actions[slot] as usize
    }

    pub fn reward(&self, slot: usize) -> f64 {
        self.rewards[slot]
    }

    pub fn terminal(&self, slot: usize) -> bool {
        self.terminals[slot]
    }

    /// Stores one transition, inserting zero padding first when a new
    /// episode starts.
    pub fn add(&mut self, frame: &[u8], action: usize, reward: f64, replay_terminal: bool) -> Result<()> {
        if frame.len() != self.cfg.frame_len() {
            return Err(crate::error::contract(format!(
                "frame has {} pixels, store expects {}",
                frame.len(),
                self.cfg.frame_len()
            )));
        }
        if !reward.is_finite() {
            return Err(Error::NonFinite(format!("reward {reward}")));
        }
        let episode_start = self.add_count == 0 || self.terminals[self.wrap(self.cursor() as isize - 1)];
        if episode_start {
            let zeros = vec![0u8; self.cfg.frame_len()];
            for _ in 1..self.cfg.stack_size {
                self.write(&zeros, 0, 0.0, false);
            }
        }
        self.write(frame, action, reward, replay_terminal);
        Ok(())
    }

    fn wrap(&self, i: isize) -> usize {
        i.rem_euclid(self.cfg.capacity as isize) as usize
    }

    fn write(&mut self, frame: &[u8], action: usize, reward: f64, terminal: bool) {
        let slot = self.cursor();
        let len = self.cfg.frame_len();
        self.frames[slot * len..(slot + 1) * len].copy_from_slice(frame);
        self.actions[slot] = action as u64;
        self.rewards[slot] = reward;
        self.terminals[slot] = terminal;
        self.add_count += 1;
        let (n, k) = (self.cfg.update_horizon as isize, self.cfg.stack_size as isize);
        let slot = slot as isize;
        for i in slot - n..slot + k {
            let index = self.wrap(i);
            let now_valid = self.compute_valid(index);
            if now_valid != self.valid[index] {
                self.valid[index] = now_valid;
                let priority = if now_valid {
                    self.num_valid += 1;
                    self.max_priority
                } else {
                    self.num_valid -= 1;
                    0.0
                };
                self.tree.set_priority(index, priority).expect("index in range");
            }
        }
    }

    /// Position of `index` counted from the oldest stored slot.
    fn age(&self, index: usize) -> usize {
        let oldest = if self.is_full() { self.cursor() } else { 0 };
        (index + self.cfg.capacity - oldest) % self.cfg.capacity
    }

    fn compute_valid(&self, index: usize) -> bool {
        let count = self.len();
        if index >= count {
            return false;
        }
        let (k, n) = (self.cfg.stack_size, self.cfg.update_horizon);
        let age = self.age(index);
        if age + 1 < k || age + n >= count {
            return false;
        }
        (1..k).all(|back| !self.terminals[self.wrap(index as isize - back as isize)])
    }

    /// Sets sampling priorities. Entries for indices that are not currently
    /// valid are ignored.
    pub fn set_priorities(&mut self, indices: &[usize], priorities: &[f64]) -> Result<()> {
        if indices.len() != priorities.len() {
            return Err(crate::error::contract("indices and priorities differ in length"));
        }
        for (&index, &priority) in indices.iter().zip(priorities) {
            if !(priority >= 0.0) || !priority.is_finite() {
                return Err(crate::error::contract(format!("priority {priority} must be finite and non-negative")));
            }
            if self.is_valid_index(index) {
                self.tree.set_priority(index, priority)?;
                self.max_priority = self.max_priority.max(priority);
            }
        }
        Ok(())
    }

    fn ensure_ready(&self, batch_size: usize) -> Result<()> {
        if batch_size == 0 {
            return Err(crate::error::contract("batch size must be positive"));
        }
        if self.num_valid < batch_size {
            return Err(Error::NotReady(format!(
                "{} valid transitions, batch needs {batch_size}",
                self.num_valid
            )));
        }
        Ok(())
    }

    /// Draws `batch_size` indices uniformly (with replacement) from the valid set.
    pub fn sample_uniform(&self, batch_size: usize, rng: &mut Stream) -> Result<ReplayBatch> {
        self.ensure_ready(batch_size)?;
        let count = self.len();
        let oldest = if self.is_full() { self.cursor() } else { 0 };
        let mut indices = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let mut drawn = None;
            for _ in 0..MAX_DRAW_ATTEMPTS {
                let index = (oldest + rng.below(count)) % self.cfg.capacity;
                if self.valid[index] {
                    drawn = Some(index);
                    break;
                }
            }
            indices.push(drawn.ok_or_else(|| Error::NotReady("valid index not found".into()))?);
        }
        let p = 1.0 / self.num_valid as f64;
        Ok(self.assemble(indices, vec![p; batch_size]))
    }

    /// Stratified prioritized sampling: `[0, total)` is split into
    /// `batch_size` equal strata with one draw per stratum.
    pub fn sample_prioritized(&self, batch_size: usize, rng: &mut Stream) -> Result<ReplayBatch> {
        self.ensure_ready(batch_size)?;
        let total = self.tree.total();
        if total <= 0.0 {
            return Err(Error::NoMass);
        }
        let width = total / batch_size as f64;
        let mut indices = Vec::with_capacity(batch_size);
        let mut probabilities = Vec::with_capacity(batch_size);
        for stratum in 0..batch_size {
            let mut drawn = None;
            for _ in 0..MAX_DRAW_ATTEMPTS {
                let u = ((stratum as f64 + rng.uniform()) * width).min(prev_float(total));
                let index = self.tree.query_prefix(u)?;
                if self.valid[index] {
                    drawn = Some(index);
                    break;
                }
            }
            let index = drawn.ok_or_else(|| Error::NotReady(format!("stratum {stratum} has no valid mass")))?;
            indices.push(index);
            probabilities.push(self.tree.get(index) / total);
        }
        Ok(self.assemble(indices, probabilities))
    }

    fn write_stack(&self, index: usize, out: &mut Vec<f64>) {
        let k = self.cfg.stack_size as isize;
        for back in (0..k).rev() {
            let slot = self.wrap(index as isize - back);
            out.extend(self.frame(slot).iter().map(|&p| f64::from(p) / 255.0));
        }
    }

    fn assemble(&self, indices: Vec<usize>, probabilities: Vec<f64>) -> ReplayBatch {
        let b = indices.len();
        let state_len = self.cfg.stack_size * self.cfg.frame_len();
        let mut batch = ReplayBatch {
            state_len,
            states: Vec::with_capacity(b * state_len),
            actions: Vec::with_capacity(b),
            n_step_returns: Vec::with_capacity(b),
            next_states: Vec::with_capacity(b * state_len),
            terminal_within_n: Vec::with_capacity(b),
            horizons: Vec::with_capacity(b),
            indices: Vec::new(),
            probabilities,
            bootstrap_discounts: Vec::with_capacity(b),
        };
        for &index in &indices {
            let mut ret = 0.0;
            let mut discount = 1.0;
            let mut horizon = 0;
            let mut terminal = false;
            for j in 0..self.cfg.update_horizon {
                let slot = (index + j) % self.cfg.capacity;
                ret += discount * self.rewards[slot];
                discount *= self.cfg.gamma;
                horizon = j + 1;
                if self.terminals[slot] {
                    terminal = true;
                    break;
                }
            }
            self.write_stack(index, &mut batch.states);
            self.write_stack((index + horizon) % self.cfg.capacity, &mut batch.next_states);
            batch.actions.push(self.actions[index] as usize);
            batch.n_step_returns.push(ret);
            batch.terminal_within_n.push(terminal);
            batch.horizons.push(horizon);
            batch.bootstrap_discounts.push(if terminal { 0.0 } else { discount });
        }
        batch.indices = indices;
        batch
    }

    /// Serializes the full store (contents, cursor, validity and priorities)
    /// with lossless compression.
    pub fn checkpoint(&self) -> Vec<u8> {
        self.to_archive().encode()
    }

    pub fn to_archive(&self) -> Archive {
        let c = &self.cfg;
        let mut a = Archive::new();
        let meta = vec![
            STORE_FORMAT,
            c.capacity as u64,
            c.stack_size as u64,
            c.update_horizon as u64,
            c.frame_width as u64,
            c.frame_height as u64,
            self.add_count,
            self.num_valid as u64,
        ];
        a.push_u64("meta", meta).expect("fresh archive");
        a.push_f64("gamma", vec![1], vec![c.gamma]).expect("fresh archive");
        a.push_f64("max_priority", vec![1], vec![self.max_priority]).expect("fresh archive");
        a.push("frames", vec![c.capacity, c.frame_height, c.frame_width], crate::codec::ArrayData::U8(self.frames.clone()))
            .expect("fresh archive");
        a.push_u64("actions", self.actions.clone()).expect("fresh archive");
        a.push_f64("rewards", vec![c.capacity], self.rewards.clone()).expect("fresh archive");
        a.push_u8("terminals", self.terminals.iter().map(|&t| t as u8).collect()).expect("fresh archive");
        a.push_u8("valid", self.valid.iter().map(|&t| t as u8).collect()).expect("fresh archive");
        let priorities = (0..c.capacity).map(|i| self.tree.get(i)).collect();
        a.push_f64("priorities", vec![c.capacity], priorities).expect("fresh archive");
        a
    }

    pub fn restore(bytes: &[u8]) -> Result<Self> {
        Self::from_archive(&Archive::decode(bytes)?)
    }

    pub fn from_archive(a: &Archive) -> Result<Self> {
        let meta = a.u64s_exact("meta", 8)?;
        if meta[0] != STORE_FORMAT {
            return Err(Error::Decode(format!("replay format {} unsupported", meta[0])));
        }
        let scalar = |name: &str| -> Result<f64> {
            match a.f64s(name)? {
                [v] => Ok(*v),
                _ => Err(Error::Decode(format!("`{name}` must be a scalar"))),
            }
        };
        let cfg = ReplayConfig {
            capacity: meta[1] as usize,
            stack_size: meta[2] as usize,
            update_horizon: meta[3] as usize,
            frame_width: meta[4] as usize,
            frame_height: meta[5] as usize,
            gamma: scalar("gamma")?,
        };
        let mut store = Self::new(cfg).map_err(|e| Error::Decode(format!("{e}")))?;
        let frames = a.u8s("frames")?;
        let actions = a.u64s_exact("actions", cfg.capacity)?;
        let rewards = a.f64s("rewards")?;
        let terminals = a.u8s("terminals")?;
        let valid = a.u8s("valid")?;
        let priorities = a.f64s("priorities")?;
        if frames.len() != store.frames.len()
            || rewards.len() != cfg.capacity
            || terminals.len() != cfg.capacity
            || valid.len() != cfg.capacity
            || priorities.len() != cfg.capacity
        {
            return Err(Error::Decode("replay array sizes do not match capacity".into()));
        }
        store.frames.copy_from_slice(frames);
        store.actions.copy_from_slice(actions);
        store.rewards.copy_from_slice(rewards);
        store.terminals = terminals.iter().map(|&t| t != 0).collect();
        store.valid = valid.iter().map(|&t| t != 0).collect();
        store.add_count = meta[6];
        store.num_valid = store.valid.iter().filter(|&&v| v).count();
        if store.num_valid as u64 != meta[7] {
            return Err(Error::Decode("valid-index count mismatch".into()));
        }
        for (i, &p) in priorities.iter().enumerate() {
            store.tree.set_priority(i, p).map_err(|e| Error::Decode(format!("{e}")))?;
        }
        store.max_priority = scalar("max_priority")?;
        Ok(store)
    }
}

fn prev_float(x: f64) -> f64 {
    f64::from_bits(x.to_bits() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(capacity: usize, k: usize, n: usize, gamma: f64) -> ReplayConfig {
        ReplayConfig { capacity, stack_size: k, update_horizon: n, gamma, frame_width: 1, frame_height: 1 }
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut s = TransitionStore::new(cfg(4, 1, 1, 0.9)).unwrap();
        for i in 0..5u8 {
            s.add(&[i], 0, f64::from(i), false).unwrap();
        }
        assert_eq!(s.cursor(), 1);
        assert_eq!(s.len(), 4);
        assert_eq!(s.frame(0), &[4]);
        assert_eq!(s.reward(0), 4.0);
    }

    #[test]
    fn empty_store_is_not_ready() {
        let s = TransitionStore::new(cfg(8, 1, 1, 0.9)).unwrap();
        let mut rng = Stream::derive(0, "replay");
        assert!(matches!(s.sample_uniform(1, &mut rng), Err(Error::NotReady(_))));
        assert!(matches!(s.sample_prioritized(1, &mut rng), Err(Error::NotReady(_))));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut s = TransitionStore::new(cfg(8, 1, 1, 0.9)).unwrap();
        assert!(matches!(s.add(&[1, 2], 0, 0.0, false), Err(Error::Contract(_))));
    }

    #[test]
    fn single_step_return_is_reward() {
        let mut s = TransitionStore::new(cfg(16, 1, 1, 0.37)).unwrap();
        for i in 0..10u8 {
            s.add(&[i], 1, f64::from(i) * 0.5, false).unwrap();
        }
        let mut rng = Stream::derive(1, "replay");
        for _ in 0..10 {
            let b = s.sample_uniform(8, &mut rng).unwrap();
            for (idx, ret) in b.indices.iter().zip(&b.n_step_returns) {
                assert_eq!(*ret, s.reward(*idx));
            }
        }
    }

    #[test]
    fn three_step_return_and_terminal_truncation() {
        let mut s = TransitionStore::new(cfg(16, 1, 3, 0.9)).unwrap();
        for _ in 0..6 {
            s.add(&[0], 0, 1.0, false).unwrap();
        }
        let b = s.assemble(vec![0], vec![1.0]);
        assert!((b.n_step_returns[0] - 2.71).abs() < 1e-12);
        assert_eq!(b.horizons[0], 3);
        assert!(!b.terminal_within_n[0]);

        let mut s = TransitionStore::new(cfg(16, 1, 3, 0.9)).unwrap();
        s.add(&[0], 0, 1.0, false).unwrap();
        s.add(&[0], 0, 1.0, true).unwrap();
        for _ in 0..4 {
            s.add(&[0], 0, 0.0, false).unwrap();
        }
        let b = s.assemble(vec![0], vec![1.0]);
        assert_eq!(b.horizons[0], 2);
        assert!(b.terminal_within_n[0]);
        assert_eq!(b.bootstrap_discounts[0], 0.0);
    }

    #[test]
    fn stacks_never_span_terminal() {
        let mut s = TransitionStore::new(cfg(64, 4, 1, 0.9)).unwrap();
        for ep in 0..3u8 {
            for t in 0..5u8 {
                s.add(&[ep * 10 + t + 1], 0, 0.0, t == 4).unwrap();
            }
        }
        let mut rng = Stream::derive(2, "replay");
        let b = s.sample_uniform(10, &mut rng).unwrap();
        for row in 0..b.len() {
            let stack = b.state(row);
            let episodes: Vec<u8> =
                stack.iter().filter(|&&v| v > 0.0).map(|&v| (libm::round(v * 255.0) as u8 - 1) / 10).collect();
            assert!(episodes.windows(2).all(|w| w[0] == w[1]), "{stack:?}");
        }
    }

    #[test]
    fn newest_transitions_wait_for_lookahead() {
        let mut s = TransitionStore::new(cfg(32, 1, 3, 0.9)).unwrap();
        for _ in 0..5 {
            s.add(&[1], 0, 0.0, false).unwrap();
        }
        assert_eq!(s.num_valid(), 2);
        assert!(s.is_valid_index(1) && !s.is_valid_index(2));
    }

    #[test]
    fn prioritized_frequencies_follow_priorities() {
        let mut s = TransitionStore::new(cfg(8, 1, 1, 0.9)).unwrap();
        for _ in 0..5 {
            s.add(&[1], 0, 0.0, false).unwrap();
        }
        s.set_priorities(&[0, 1, 2, 3], &[1.0, 1.0, 1.0, 7.0]).unwrap();
        let mut rng = Stream::derive(3, "replay");
        let draws = 100_000;
        let mut hits = 0;
        for _ in 0..draws / 4 {
            let b = s.sample_prioritized(4, &mut rng).unwrap();
            hits += b.indices.iter().filter(|&&i| i == 3).count();
            assert!((b.probabilities[3] - 0.7).abs() < 1e-12 || b.indices[3] != 3);
        }
        let freq = hits as f64 / draws as f64;
        let se = libm::sqrt(0.7 * 0.3 / draws as f64);
        assert!((freq - 0.7).abs() < 3.0 * se, "freq {freq}");
    }

    #[test]
    fn zero_priority_never_drawn() {
        let mut s = TransitionStore::new(cfg(8, 1, 1, 0.9)).unwrap();
        for _ in 0..5 {
            s.add(&[1], 0, 0.0, false).unwrap();
        }
        s.set_priorities(&[2], &[0.0]).unwrap();
        let mut rng = Stream::derive(4, "replay");
        for _ in 0..2000 {
            assert!(!s.sample_prioritized(4, &mut rng).unwrap().indices.contains(&2));
        }
    }

    #[test]
    fn checkpoint_round_trip_and_compression() {
        let mut s = TransitionStore::new(ReplayConfig { frame_width: 10, frame_height: 10, ..cfg(500, 4, 3, 0.99) }).unwrap();
        for t in 0..700 {
            s.add(&[0; 100], t % 3, 0.5, t % 37 == 36).unwrap();
        }
        s.set_priorities(&[10, 11], &[3.0, 0.25]).unwrap();
        let bytes = s.checkpoint();
        assert!(bytes.len() * 20 < 500 * 100, "compressed to {} bytes", bytes.len());
        let restored = TransitionStore::restore(&bytes).unwrap();
        assert_eq!(restored, s);
        assert_eq!(restored.checkpoint(), bytes);
        let (mut r1, mut r2) = (Stream::derive(9, "replay"), Stream::derive(9, "replay"));
        for _ in 0..10 {
            assert_eq!(s.sample_prioritized(8, &mut r1).unwrap(), restored.sample_prioritized(8, &mut r2).unwrap());
        }
    }

    #[test]
    fn corrupt_checkpoint_rejected() {
        let s = TransitionStore::new(cfg(8, 1, 1, 0.9)).unwrap();
        let mut bytes = s.checkpoint();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        assert!(TransitionStore::restore(&bytes).is_err());
    }

    #[test]
    fn capacity_must_exceed_window() {
        assert!(TransitionStore::new(cfg(4, 2, 2, 0.9)).is_err());
    }
}
