use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a value recorded in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Everything a primitive sees when propagating gradients to its inputs.
pub(crate) struct BackwardCtx<'a, T> {
    pub inputs: Vec<&'a Tensor<T>>,
    pub output: &'a Tensor<T>,
    pub grad: &'a Tensor<T>,
    /// `needs[i]` is false when input `i` does not lead to anything that requires a gradient.
    pub needs: Vec<bool>,
}

/// Vector-Jacobian product of one primitive.
pub(crate) trait Backward<T> {
    fn backward(&self, ctx: BackwardCtx<'_, T>) -> Result<Vec<Option<Tensor<T>>>>;
}

struct Node<T> {
    value: Tensor<T>,
    inputs: Vec<usize>,
    op: Option<Box<dyn Backward<T>>>,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// Tape of primitive applications, appended in topological order.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grad_enabled: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grad_enabled: true,
        }
    }

    /// A graph that records values only. Backward is unavailable; saved buffers are skipped.
    pub fn inference() -> Self {
        Graph {
            nodes: Vec::new(),
            grad_enabled: false,
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf value. `requires_grad` makes its gradient available from [`Gradients::wrt`].
    pub fn input(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push_leaf(value, requires_grad && self.grad_enabled, None)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, false, None)
    }

    /// Leaf bound to a parameter; its gradient is routed back by [`Gradients::accumulate`].
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let value = store.get(id).value.clone();
        let rg = self.grad_enabled && store.get(id).trainable;
        self.push_leaf(value, rg, Some(id))
    }

    fn push_leaf(&mut self, value: Tensor<T>, requires_grad: bool, param: Option<ParamId>) -> Var {
        self.nodes.push(Node {
            value,
            inputs: Vec::new(),
            op: None,
            requires_grad,
            param,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Whether a primitive over `inputs` has to keep state for backward.
    pub(crate) fn tracking(&self, inputs: &[Var]) -> bool {
        self.grad_enabled && inputs.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Record the result of a primitive. Non-finite outputs are rejected.
    pub(crate) fn push_op(
        &mut self,
        name: &'static str,
        value: Tensor<T>,
        inputs: &[Var],
        op: Box<dyn Backward<T>>,
    ) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite(name));
        }
        let requires_grad = self.tracking(inputs);
        self.nodes.push(Node {
            value,
            inputs: inputs.iter().map(|v| v.0).collect(),
            op: requires_grad.then_some(op),
            requires_grad,
            param: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Reverse sweep from a scalar root. Each node is visited once, newest first.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        let root_value = &self.nodes[root.0].value;
        if root_value.len() != 1 {
            return Err(Error::shape(
                "backward",
                "root",
                format!("root must be a scalar, got shape {:?}", root_value.shape()),
            ));
        }
        if !self.grad_enabled {
            return Err(Error::Invalid("backward on an inference-only graph".into()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::ones(root_value.shape()));

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            let Some(op) = node.op.as_ref() else { continue };
            let Some(grad) = grads[idx].take() else { continue };
            let ctx = BackwardCtx {
                inputs: node.inputs.iter().map(|&i| &self.nodes[i].value).collect(),
                output: &node.value,
                grad: &grad,
                needs: node.inputs.iter().map(|&i| self.nodes[i].requires_grad).collect(),
            };
            let input_grads = op.backward(ctx)?;
            for (&inp, g) in node.inputs.iter().zip(input_grads) {
                let Some(g) = g else { continue };
                if !self.nodes[inp].requires_grad {
                    continue;
                }
                if g.shape() != self.nodes[inp].value.shape() {
                    return Err(Error::shape(
                        "backward",
                        "gradient",
                        format!(
                            "gradient {:?} for value {:?}",
                            g.shape(),
                            self.nodes[inp].value.shape()
                        ),
                    ));
                }
                match &mut grads[inp] {
                    Some(acc) => acc.add_assign(&g)?,
                    slot => *slot = Some(g),
                }
            }
            grads[idx] = Some(grad);
        }

        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.param.map(|p| (i, p)))
            .collect();
        Ok(Gradients { grads, params })
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    params: Vec<(usize, ParamId)>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the root with respect to a leaf or intermediate value.
    /// `None` means the value does not influence the root.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Add every parameter leaf gradient into `store`.
    pub fn accumulate(&self, store: &mut ParamStore<T>) -> Result<()> {
        for &(node, id) in &self.params {
            if let Some(g) = &self.grads[node] {
                store.get_mut(id).grad.add_assign(g)?;
            }
        }
        Ok(())
    }
}
