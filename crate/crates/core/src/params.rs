//! Named parameter storage with freeze masks.
//!
//! A `ParamStore` owns the master copy of every weight. Each forward pass
//! injects parameters into a fresh graph as leaves; gradients are harvested
//! back by name after `backward`. Frozen parameters enter with gradient
//! tracking off and are skipped by the optimizer, so their values stay
//! bit-identical over any number of steps.
//!
//! Iteration order is the sorted name order everywhere, which keeps
//! training and checkpoints reproducible.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
    frozen: BTreeSet<String>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<()> {
        if self.params.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter name: {name}")));
        }
        self.params.insert(name.to_string(), value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn n_values(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Freeze every parameter whose name fails the predicate.
    pub fn freeze_except<F: Fn(&str) -> bool>(&mut self, keep_trainable: F) {
        self.frozen = self
            .params
            .keys()
            .filter(|name| !keep_trainable(name))
            .cloned()
            .collect();
    }

    pub fn freeze_all(&mut self) {
        self.frozen = self.params.keys().cloned().collect();
    }

    pub fn unfreeze_all(&mut self) {
        self.frozen.clear();
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.frozen.contains(name)
    }

    pub fn frozen_names(&self) -> impl Iterator<Item = &str> {
        self.frozen.iter().map(String::as_str)
    }
}

/// One forward pass worth of parameter leaves: maps names to graph nodes so
/// gradients can be read back after `backward`.
pub struct BoundParams<'a> {
    store: &'a ParamStore,
    bound: BTreeMap<String, NodeId>,
    track: bool,
}

impl<'a> BoundParams<'a> {
    /// `track = false` builds an inference-only pass: no parameter gradients.
    pub fn bind(store: &'a ParamStore, track: bool) -> Self {
        BoundParams { store, bound: BTreeMap::new(), track }
    }

    pub fn node(&mut self, graph: &mut Graph, name: &str) -> Result<NodeId> {
        if let Some(&id) = self.bound.get(name) {
            return Ok(id);
        }
        let tensor = self
            .store
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter: {name}")))?;
        let requires_grad = self.track && !self.store.is_frozen(name);
        let id = graph.leaf(tensor.clone(), requires_grad);
        self.bound.insert(name.to_string(), id);
        Ok(id)
    }

    /// Gradients of every trainable bound parameter, keyed by name.
    /// Parameters that never received gradient (e.g. frozen) are absent.
    pub fn grads(&self, graph: &Graph) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        for (name, &id) in &self.bound {
            if let Some(g) = graph.grad(id) {
                out.insert(name.clone(), g.clone());
            }
        }
        out
    }
}
