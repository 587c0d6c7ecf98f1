use alloc::collections::VecDeque;
use alloc::vec::Vec;

use super::Observation;

/// `k` frames, oldest first, flattened to network-ready intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedState {
    pub stack_size: usize,
    pub frame_len: usize,
    pub values: Vec<f64>,
}

/// Stacks the `k` most recent observations of `history` (oldest first),
/// zero-padding at the front when fewer than `k` are available.
pub fn stack_frames(history: &[Observation], k: usize, width: usize, height: usize) -> StackedState {
    let frame_len = width * height;
    let mut values = Vec::with_capacity(k * frame_len);
    let available = history.len().min(k);
    values.resize((k - available) * frame_len, 0.0);
    for obs in &history[history.len() - available..] {
        values.extend(obs.pixels().iter().map(|&p| f64::from(p) / 255.0));
    }
    StackedState { stack_size: k, frame_len, values }
}

/// Rolling window of the last `k` frames of the current episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameStack {
    k: usize,
    width: usize,
    height: usize,
    frames: VecDeque<Vec<u8>>,
}

impl FrameStack {
    pub fn new(k: usize, width: usize, height: usize) -> Self {
        assert!(k >= 1, "stack size must be at least 1");
        let mut stack = Self { k, width, height, frames: VecDeque::with_capacity(k) };
        stack.reset();
        stack
    }

    pub fn stack_size(&self) -> usize {
        self.k
    }

    /// Clears the window to zero frames (start of an episode).
    pub fn reset(&mut self) {
        self.frames.clear();
        for _ in 0..self.k {
            self.frames.push_back(alloc::vec![0; self.width * self.height]);
        }
    }

    pub fn push(&mut self, obs: &Observation) {
        debug_assert_eq!(obs.pixels().len(), self.width * self.height);
        self.frames.pop_front();
        self.frames.push_back(obs.pixels().to_vec());
    }

    /// Most recent frame.
    pub fn latest(&self) -> &[u8] {
        self.frames.back().expect("k >= 1")
    }

    pub fn write_input(&self, out: &mut Vec<f64>) {
        for frame in &self.frames {
            out.extend(frame.iter().map(|&p| f64::from(p) / 255.0));
        }
    }

    pub fn state(&self) -> StackedState {
        let mut values = Vec::with_capacity(self.k * self.width * self.height);
        self.write_input(&mut values);
        StackedState { stack_size: self.k, frame_len: self.width * self.height, values }
    }

    pub(crate) fn raw_frames(&self) -> impl Iterator<Item = &[u8]> {
        self.frames.iter().map(|f| f.as_slice())
    }

    pub(crate) fn set_raw_frames(&mut self, data: &[u8]) -> bool {
        let len = self.width * self.height;
        if data.len() != len * self.k {
            return false;
        }
        self.frames = data.chunks_exact(len).map(|c| c.to_vec()).collect();
        true
    }
}
