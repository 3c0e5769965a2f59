use std::collections::HashMap;

use crate::autodiff::{Gradients, NodeId};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named learned tensors in declaration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    by_name: HashMap<String, ParamId>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor. Panics on a duplicate name.
    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        let name = name.into();
        let id = ParamId(self.tensors.len());
        assert!(
            self.by_name.insert(name.clone(), id).is_none(),
            "duplicate parameter {name}"
        );
        self.names.push(name);
        self.tensors.push(t);
        id
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn id_at(&self, index: usize) -> ParamId {
        assert!(index < self.len());
        ParamId(index)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    /// Total number of scalar entries.
    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// `θ ← θ - rate · g` for every tensor.
    pub fn apply_update(&mut self, grad: &StoreGradient, rate: f64) {
        for (t, g) in self.tensors.iter_mut().zip(&grad.0) {
            t.add_scaled(g, -rate);
        }
    }
}

/// One gradient tensor per entry of a [`ParameterStore`], in the same order.
#[derive(Clone, Debug, PartialEq)]
pub struct StoreGradient(Vec<Tensor>);

impl StoreGradient {
    pub fn zeros_like(store: &ParameterStore) -> Self {
        StoreGradient(
            store
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.rows(), t.cols()))
                .collect(),
        )
    }

    /// Gathers gradients of parameter nodes; `nodes[i]` belongs to the i-th store entry.
    pub fn from_nodes(store: &ParameterStore, grads: &Gradients, nodes: &[NodeId]) -> Self {
        let optional: Vec<Option<NodeId>> = nodes.iter().copied().map(Some).collect();
        Self::from_bound(store, grads, &optional)
    }

    /// Like [`StoreGradient::from_nodes`] but entries that never entered the
    /// graph get zeros.
    pub fn from_bound(store: &ParameterStore, grads: &Gradients, nodes: &[Option<NodeId>]) -> Self {
        assert_eq!(nodes.len(), store.len());
        StoreGradient(
            store
                .tensors
                .iter()
                .zip(nodes)
                .map(|(t, n)| match n.and_then(|n| grads.get(n)) {
                    Some(g) => g.clone(),
                    None => Tensor::zeros(t.rows(), t.cols()),
                })
                .collect(),
        )
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.0[id.0]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(Tensor::squared_norm).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in &mut self.0 {
            t.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Rescales to norm `max_norm` when the norm exceeds it; returns the norm before clipping.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub fn accumulate(&mut self, other: &StoreGradient) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.add_scaled(b, 1.0);
        }
    }
}
