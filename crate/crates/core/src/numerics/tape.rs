//! Define-by-run reverse-mode tape.
//!
//! Every recorded operation appends one node holding its output value and,
//! when any input requires a gradient, a backward rule. Nodes are appended in
//! execution order, so the node list is already a topological order and the
//! backward pass is a single reverse sweep.

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use super::{NumericsError, Tensor};

/// Index of a node on a [`Tape`].
pub type NodeId = usize;

/// Backward rule: receives the gradient of the node's output and pushes
/// contributions into the gradients of its inputs.
pub type BackwardFn = Box<dyn Fn(&[f64], &mut Grads<'_>)>;

struct Node {
    op: &'static str,
    value: Rc<Tensor>,
    requires_grad: bool,
    backward: Option<BackwardFn>,
}

/// Gradient buffers handed to backward rules.
pub struct Grads<'a> {
    slots: &'a mut [Option<Vec<f64>>],
    sizes: &'a [usize],
    requires: &'a [bool],
}

impl Grads<'_> {
    /// Mutable gradient buffer for `id`, allocated as zeros on first use.
    /// Returns `None` for nodes that do not take part in differentiation.
    pub fn slot(&mut self, id: NodeId) -> Option<&mut [f64]> {
        if !self.requires[id] {
            return None;
        }
        let size = self.sizes[id];
        Some(self.slots[id].get_or_insert_with(|| vec![0.0; size]))
    }

    pub fn accumulate(&mut self, id: NodeId, contribution: &[f64]) {
        if let Some(g) = self.slot(id) {
            debug_assert_eq!(g.len(), contribution.len());
            for (acc, c) in g.iter_mut().zip(contribution) {
                *acc += c;
            }
        }
    }
}

/// Recorded computation graph. Single-threaded; build a fresh tape per
/// forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    grads: RefCell<Vec<Option<Vec<f64>>>>,
}

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: NodeId,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leaf whose gradient is tracked.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push("param", value, true, None)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push("constant", value, false, None)
    }

    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        if requires_grad {
            self.param(value)
        } else {
            self.constant(value)
        }
    }

    /// Records an operation with a caller-supplied backward rule. The rule is
    /// dropped when none of `inputs` requires a gradient.
    pub fn custom<'t, F>(&'t self, op: &'static str, inputs: &[Var<'t>], output: Tensor, backward: F) -> Var<'t>
    where
        F: Fn(&[f64], &mut Grads<'_>) + 'static,
    {
        let requires = inputs.iter().any(|v| {
            assert!(std::ptr::eq(v.tape, self), "input `{op}` belongs to another tape");
            v.requires_grad()
        });
        let rule: Option<BackwardFn> = if requires { Some(Box::new(backward)) } else { None };
        self.push(op, output, requires, rule)
    }

    fn push(&self, op: &'static str, value: Tensor, requires_grad: bool, backward: Option<BackwardFn>) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            op,
            value: Rc::new(value),
            requires_grad,
            backward,
        });
        Var { tape: self, id }
    }

    /// Reverse sweep from a scalar `loss`. Gradients accumulate additively
    /// over every use of a node.
    pub fn backward(&self, loss: Var<'_>) -> Result<(), NumericsError> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if !root.value.is_scalar() {
            return Err(NumericsError::NotScalar(root.value.shape().to_vec()));
        }
        let sizes: Vec<usize> = nodes.iter().map(|n| n.value.numel()).collect();
        let requires: Vec<bool> = nodes.iter().map(|n| n.requires_grad).collect();
        let mut slots: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        if root.requires_grad {
            slots[loss.id] = Some(vec![1.0]);
        }

        for id in (0..=loss.id).rev() {
            let Some(rule) = nodes[id].backward.as_ref() else {
                continue;
            };
            // Taken out so the rule can borrow the other slots mutably; put
            // back afterwards so intermediate gradients stay inspectable.
            let Some(out_grad) = slots[id].take() else {
                continue;
            };
            let mut grads = Grads {
                slots: &mut slots,
                sizes: &sizes,
                requires: &requires,
            };
            rule(&out_grad, &mut grads);
            slots[id] = Some(out_grad);
        }
        *self.grads.borrow_mut() = slots;
        Ok(())
    }

    /// Gradient of the last backward pass with respect to `var`, or `None`
    /// if `var` was not reached.
    pub fn grad(&self, var: Var<'_>) -> Option<Tensor> {
        let grads = self.grads.borrow();
        let g = grads.get(var.id)?.as_ref()?;
        Some(Tensor::new(var.value().shape(), g.clone()).expect("gradient shape matches value"))
    }

    /// Like [`Tape::grad`] but zeros for unreached nodes.
    pub fn grad_or_zeros(&self, var: Var<'_>) -> Tensor {
        self.grad(var).unwrap_or_else(|| Tensor::zeros(var.value().shape()))
    }

    pub(crate) fn value_of(&self, id: NodeId) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn op_of(&self, id: NodeId) -> &'static str {
        self.nodes.borrow()[id].op
    }

    fn requires_grad_of(&self, id: NodeId) -> bool {
        self.nodes.borrow()[id].requires_grad
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad_of(self.id)
    }

    pub fn op(&self) -> &'static str {
        self.tape.op_of(self.id)
    }

    /// Value of a one-element variable.
    pub fn item(&self) -> f64 {
        self.value().item()
    }
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}({}) {:?}", self.id, self.op(), self.value())
    }
}
