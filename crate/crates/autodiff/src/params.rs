use std::collections::HashMap;

use crate::error::{AdError, Result};
use crate::tensor::Tensor;

/// Ordered, named collection of parameter tensors. Order is insertion order
/// and defines the layout of optimizer state and checkpoint files.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, t: Tensor) {
        if let Some(&i) = self.index.get(name) {
            self.entries[i].1 = t;
        } else {
            self.index.insert(name.to_string(), self.entries.len());
            self.entries.push((name.to_string(), t));
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn expect(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| AdError::Config(format!("missing parameter '{name}'")))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.entries[i].1)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    /// Renames every entry with a `prefix/` and merges into `self`.
    pub fn merge_prefixed(&mut self, prefix: &str, other: &ParamSet) {
        for (name, t) in other.iter() {
            self.insert(&format!("{prefix}/{name}"), t.clone());
        }
    }

    /// Extracts the sub-set under `prefix/`, stripping the prefix.
    pub fn strip_prefix(&self, prefix: &str) -> ParamSet {
        let mut out = ParamSet::new();
        let pat = format!("{prefix}/");
        for (name, t) in self.iter() {
            if let Some(rest) = name.strip_prefix(&pat) {
                out.insert(rest, t.clone());
            }
        }
        out
    }

    pub fn total_elements(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }
}

/// Gradients keyed by parameter name, summed across accumulation.
#[derive(Debug, Clone, Default)]
pub struct GradMap {
    grads: HashMap<String, Tensor>,
}

impl GradMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn accumulate(&mut self, name: &str, g: Tensor) {
        match self.grads.get_mut(name) {
            Some(acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(g.data().iter()) {
                    *a += b;
                }
            }
            None => {
                self.grads.insert(name.to_string(), g);
            }
        }
    }

    pub fn accumulate_all(&mut self, grads: Vec<(String, Tensor)>) {
        for (name, g) in grads {
            self.accumulate(&name, g);
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.grads.get(name)
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.grads.values_mut() {
            for x in g.data_mut() {
                *x *= s;
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}
