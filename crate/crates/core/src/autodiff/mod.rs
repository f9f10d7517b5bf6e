//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] records one forward pass. Every recorded value is a node whose
//! parents have smaller indices, so the node index order is a topological
//! order and backward simply walks the tape in reverse.

mod ops;
mod param;

pub use param::{ParamId, ParamStore, Parameter};

use std::collections::HashMap;

use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Inputs to a backward rule.
pub struct BackwardCtx<'a, T> {
    /// Upstream gradient, same dims as `output`.
    pub grad: &'a Tensor<T>,
    pub inputs: Vec<&'a Tensor<T>>,
    pub output: &'a Tensor<T>,
    /// Which inputs require a gradient; rules may skip the others.
    pub needs: Vec<bool>,
}

/// Maps the upstream gradient to one gradient per input (`None` = no contribution).
pub type BackwardFn<T> = Box<dyn Fn(&BackwardCtx<'_, T>) -> Result<Vec<Option<Tensor<T>>>>>;

struct Node<T> {
    value: Tensor<T>,
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    requires_grad: bool,
    param: Option<ParamId>,
    grad: Option<Tensor<T>>,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    param_nodes: HashMap<ParamId, usize>,
    frozen_params: bool,
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
            frozen_params: false,
        }
    }

    /// A tape whose parameters enter as constants, so nothing records a
    /// backward rule. Used for evaluation.
    pub fn inference() -> Self {
        Tape {
            frozen_params: true,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push_leaf(&mut self, value: Tensor<T>, requires_grad: bool, param: Option<ParamId>) -> Var {
        self.nodes.push(Node {
            value,
            parents: Vec::new(),
            backward: None,
            requires_grad,
            param,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, false, None)
    }

    /// A differentiable input that is not a stored parameter.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, true, None)
    }

    /// The node bound to parameter `id`, created on first use.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&n) = self.param_nodes.get(&id) {
            return Var(n);
        }
        let v = self.push_leaf(store.value(id).clone(), !self.frozen_params, Some(id));
        self.param_nodes.insert(id, v.0);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of `v`; zeros when nothing has flowed into it.
    pub fn grad(&self, v: Var) -> Tensor<T> {
        let n = &self.nodes[v.0];
        n.grad.clone().unwrap_or_else(|| Tensor::zeros(n.value.dims()))
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Records an operation. The backward rule is dropped when no input needs a gradient.
    pub fn custom(&mut self, inputs: &[Var], value: Tensor<T>, backward: BackwardFn<T>) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            parents: inputs.iter().map(|v| v.0).collect(),
            backward: requires_grad.then_some(backward),
            requires_grad,
            param: None,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Backpropagate from a scalar `root`, adding into every ancestor's gradient.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let root_dims = self.nodes[root.0].value.dims().to_vec();
        if root_dims.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarRoot(root_dims));
        }
        if !self.nodes[root.0].requires_grad {
            return Ok(());
        }
        let mut pending: Vec<Option<Tensor<T>>> = Vec::with_capacity(root.0 + 1);
        pending.resize_with(root.0 + 1, || None);
        pending[root.0] = Some(Tensor::ones(&root_dims));

        for i in (0..=root.0).rev() {
            let Some(g) = pending[i].take() else { continue };
            let node = &self.nodes[i];
            if let Some(rule) = &node.backward {
                let ctx = BackwardCtx {
                    grad: &g,
                    inputs: node.parents.iter().map(|&p| &self.nodes[p].value).collect(),
                    output: &node.value,
                    needs: node.parents.iter().map(|&p| self.nodes[p].requires_grad).collect(),
                };
                let parent_grads = rule(&ctx)?;
                debug_assert_eq!(parent_grads.len(), node.parents.len());
                for (&p, pg) in node.parents.iter().zip(parent_grads) {
                    let Some(pg) = pg else { continue };
                    if !self.nodes[p].requires_grad {
                        continue;
                    }
                    pg.same_shape(&self.nodes[p].value, "backward")?;
                    match &mut pending[p] {
                        Some(acc) => acc.add_assign(&pg)?,
                        slot => *slot = Some(pg),
                    }
                }
            }
            let node = &mut self.nodes[i];
            match &mut node.grad {
                Some(acc) => acc.add_assign(&g)?,
                slot => *slot = Some(g),
            }
        }
        Ok(())
    }

    /// Gradients of every parameter node that received one.
    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.nodes
            .iter()
            .filter_map(|n| Some((n.param?, n.grad.as_ref()?)))
    }
}
