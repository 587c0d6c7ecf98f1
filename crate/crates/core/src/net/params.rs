use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::Tensor;
use crate::codec::Archive;
use crate::{Error, Result};

/// Named parameter tensors in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    seed: u64,
    entries: Vec<(String, Tensor)>,
}

impl ParameterSet {
    pub fn new(seed: u64) -> Self {
        Self { seed, entries: Vec::new() }
    }

    /// Seed the values were initialized from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.iter().any(|(n, _)| *n == name) {
            return Err(crate::error::contract(format!("duplicate parameter `{name}`")));
        }
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| crate::error::contract(format!("unknown parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| crate::error::contract(format!("unknown parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count across all tensors.
    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            seed: self.seed,
            entries: self.entries.iter().map(|(n, t)| (n.clone(), Tensor::zeros(t.shape().to_vec()))).collect(),
        }
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|((n1, t1), (n2, t2))| n1 == n2 && t1.shape() == t2.shape())
    }

    pub fn fill(&mut self, value: f64) {
        self.entries.iter_mut().for_each(|(_, t)| t.fill(value));
    }

    /// All values concatenated in entry order.
    pub fn flatten(&self) -> Vec<f64> {
        self.entries.iter().flat_map(|(_, t)| t.data().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, index: usize, value: f64) {
        let mut offset = index;
        for (_, t) in &mut self.entries {
            if offset < t.len() {
                t.data_mut()[offset] = value;
                return;
            }
            offset -= t.len();
        }
        panic!("flat index {index} out of range");
    }

    pub fn write_archive(&self, prefix: &str, archive: &mut Archive) -> Result<()> {
        for (name, t) in &self.entries {
            archive.push_f64(format!("{prefix}{name}"), t.shape().to_vec(), t.data().to_vec())?;
        }
        Ok(())
    }

    /// Reads every parameter of `self`'s layout from `archive`, replacing values.
    pub fn read_archive(&mut self, prefix: &str, archive: &Archive) -> Result<()> {
        for (name, t) in &mut self.entries {
            let key = format!("{prefix}{name}");
            let record = archive.get(&key)?;
            if record.shape != t.shape() {
                return Err(Error::Decode(format!(
                    "parameter `{key}` has shape {:?}, expected {:?}",
                    record.shape,
                    t.shape()
                )));
            }
            t.data_mut().copy_from_slice(archive.f64s(&key)?);
        }
        Ok(())
    }
}
