//! Define-by-run computation graph with reverse-mode gradients.
//!
//! Every forward value is computed eagerly when a node is added. Parameter
//! nodes borrow their tensors from a [`ParameterStore`](crate::model::ParameterStore)
//! for the lifetime of the graph, so a graph is built per sentence pair and
//! dropped before the update is applied.

mod gradcheck;
mod ops;

use std::borrow::Cow;

pub use gradcheck::{finite_difference_check, relative_error, GradCheckReport};
pub use ops::Primitive;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Origin {
    Input,
    Parameter,
    Op(Primitive),
}

#[derive(Debug)]
struct Node<'p> {
    origin: Origin,
    inputs: Vec<NodeId>,
    value: Cow<'p, Tensor>,
    requires_grad: bool,
}

/// Ordered node list plus the registry of parameter nodes.
#[derive(Debug, Default)]
pub struct Graph<'p> {
    nodes: Vec<Node<'p>>,
    parameters: Vec<NodeId>,
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            parameters: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node. Parameter tensors live in their stores and are untouched.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.parameters.clear();
    }

    /// Adds a constant. Gradients stop here.
    pub fn input(&mut self, t: Tensor) -> Result<NodeId> {
        if !t.is_finite() {
            return Err(Error::NonFinite("input"));
        }
        Ok(self.push(Origin::Input, Vec::new(), Cow::Owned(t), false))
    }

    /// Adds a parameter leaf whose gradient is reported by [`Graph::backward`].
    pub fn parameter(&mut self, t: &'p Tensor) -> NodeId {
        let id = self.push(Origin::Parameter, Vec::new(), Cow::Borrowed(t), true);
        self.parameters.push(id);
        id
    }

    pub fn parameters(&self) -> &[NodeId] {
        &self.parameters
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn dims(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.dims()
    }

    /// Applies a primitive to existing nodes, evaluating it immediately.
    pub fn apply(&mut self, kind: Primitive, inputs: &[NodeId]) -> Result<NodeId> {
        for id in inputs {
            if id.0 >= self.nodes.len() {
                return Err(Error::IndexOutOfRange {
                    index: id.0,
                    len: self.nodes.len(),
                });
            }
        }
        let values: Vec<&Tensor> = inputs.iter().map(|id| self.value(*id)).collect();
        let out = kind.forward(&values)?;
        if !out.is_finite() {
            return Err(Error::NonFinite(kind.name()));
        }
        let requires_grad = inputs.iter().any(|id| self.nodes[id.0].requires_grad);
        Ok(self.push(
            Origin::Op(kind),
            inputs.to_vec(),
            Cow::Owned(out),
            requires_grad,
        ))
    }

    fn push(
        &mut self,
        origin: Origin,
        inputs: Vec<NodeId>,
        value: Cow<'p, Tensor>,
        requires_grad: bool,
    ) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            origin,
            inputs,
            value,
            requires_grad,
        });
        id
    }

    /// Reverse sweep from a scalar loss. Gradients of a node with several
    /// consumers are summed.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let (rows, cols) = self.dims(loss);
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarLoss { rows, cols });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::filled(1, 1, 1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            let Origin::Op(kind) = node.origin else {
                continue;
            };
            if !node.requires_grad {
                continue;
            }
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            let values: Vec<&Tensor> = node.inputs.iter().map(|id| self.value(*id)).collect();
            let wanted: Vec<bool> = node
                .inputs
                .iter()
                .map(|id| self.nodes[id.0].requires_grad)
                .collect();
            let input_grads = kind.backward(&values, &node.value, &dy, &wanted);
            for ((input, wanted), g) in node.inputs.iter().zip(wanted).zip(input_grads) {
                if !wanted {
                    continue;
                }
                let Some(g) = g else { continue };
                match &mut grads[input.0] {
                    Some(acc) => acc.add_scaled(&g, 1.0),
                    slot @ None => *slot = Some(g),
                }
            }
            // Keep the gradient of leaves and interior nodes alike for inspection.
            grads[idx] = Some(dy);
        }
        if grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("backward"));
        }
        let dims = self.nodes.iter().map(|n| n.value.dims()).collect();
        Ok(Gradients { grads, dims })
    }
}

/// Result of a reverse sweep: one gradient per node reached from the loss.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    dims: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `id`, or `None` when the loss does not depend on it.
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Like [`Gradients::get`] but yields zeros for disconnected nodes.
    pub fn wrt(&self, id: NodeId) -> Tensor {
        match self.get(id) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.dims[id.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

/// Shorthand constructors for each primitive.
impl<'p> Graph<'p> {
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Sub, &[a, b])
    }

    pub fn cwise_mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::CwiseMul, &[a, b])
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Tanh, &[a])
    }

    pub fn logistic(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Logistic, &[a])
    }

    pub fn softplus(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Softplus, &[a])
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Exp, &[a])
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Log, &[a])
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Square, &[a])
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.apply(Primitive::ConcatRows, parts)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.apply(Primitive::ConcatCols, parts)
    }

    pub fn sum_elems(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::SumElems, &[a])
    }

    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Softmax, &[a])
    }

    pub fn pick_neg_log_softmax(&mut self, a: NodeId, index: usize) -> Result<NodeId> {
        self.apply(Primitive::PickNegLogSoftmax(index), &[a])
    }

    pub fn scalar_mul(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.apply(Primitive::ScalarMul(c), &[a])
    }

    pub fn trace_of_product(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::TraceOfProduct, &[a, b])
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Transpose, &[a])
    }

    pub fn add_column(&mut self, m: NodeId, v: NodeId) -> Result<NodeId> {
        self.apply(Primitive::AddColumn, &[m, v])
    }

    pub fn row_lookup(&mut self, m: NodeId, row: usize) -> Result<NodeId> {
        self.apply(Primitive::RowLookup(row), &[m])
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.apply(Primitive::SliceRows { start, len }, &[a])
    }

    pub fn window(&mut self, v: NodeId, k: usize, reach: usize) -> Result<NodeId> {
        self.apply(Primitive::Window { k, reach }, &[v])
    }

    /// Sum of several same-shaped nodes.
    pub fn sum(&mut self, terms: &[NodeId]) -> Result<NodeId> {
        let (first, rest) = terms.split_first().ok_or(Error::DimMismatch {
            op: "sum",
            detail: "no terms".into(),
        })?;
        rest.iter().try_fold(*first, |acc, t| self.add(acc, *t))
    }
}
