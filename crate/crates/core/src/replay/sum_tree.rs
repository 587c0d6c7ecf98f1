use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Complete binary tree over a power-of-two number of leaf priorities. Each
/// internal node holds the sum of its two children, recomputed from the
/// children (never by delta) so the parent-sum invariant holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SumTree {
    capacity: usize,
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "sum tree capacity must be positive");
        let leaves = capacity.next_power_of_two();
        Self { capacity, leaves, nodes: vec![0.0; 2 * leaves - 1] }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of leaves actually allocated (next power of two).
    pub fn leaf_count(&self) -> usize {
        self.leaves
    }

    pub fn total(&self) -> f64 {
        self.nodes[0]
    }

    pub fn get(&self, leaf_index: usize) -> f64 {
        self.nodes[self.leaves - 1 + leaf_index]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn set_priority(&mut self, leaf_index: usize, priority: f64) -> Result<()> {
        if leaf_index >= self.capacity {
            return Err(crate::error::contract(format!(
                "leaf {leaf_index} out of range (capacity {})",
                self.capacity
            )));
        }
        if !(priority >= 0.0) || !priority.is_finite() {
            return Err(crate::error::contract(format!("priority {priority} must be finite and non-negative")));
        }
        let mut node = self.leaves - 1 + leaf_index;
        self.nodes[node] = priority;
        while node > 0 {
            node = (node - 1) / 2;
            self.nodes[node] = self.nodes[2 * node + 1] + self.nodes[2 * node + 2];
        }
        Ok(())
    }

    /// Returns the leaf at which the running prefix sum of priorities first
    /// exceeds `u`. Requires `0 <= u < total()`.
    pub fn query_prefix(&self, u: f64) -> Result<usize> {
        let total = self.total();
        if total <= 0.0 {
            return Err(Error::NoMass);
        }
        if !(0.0..total).contains(&u) {
            return Err(crate::error::contract(format!("query {u} outside [0, {total})")));
        }
        let mut node = 0;
        let mut remaining = u;
        while node < self.leaves - 1 {
            let left = 2 * node + 1;
            let right = left + 1;
            if remaining < self.nodes[left] || self.nodes[right] <= 0.0 {
                node = left;
            } else {
                remaining -= self.nodes[left];
                node = right;
            }
        }
        Ok(node - (self.leaves - 1))
    }
}
