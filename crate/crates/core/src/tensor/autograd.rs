use std::cell::{Cell, RefCell};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

use super::{Real, Tensor};
use crate::error::{Error, Result};

thread_local! {
    static NEXT_NODE_ID: Cell<u64> = const { Cell::new(0) };
}

fn next_node_id() -> u64 {
    NEXT_NODE_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// A recorded differentiable operation.
///
/// `backward` receives the output value, the gradient flowing into the output,
/// and a mask telling which inputs need a gradient. It returns one entry per
/// input, `None` where no gradient was requested.
pub trait Function<R: Real> {
    fn name(&self) -> &'static str;

    fn inputs(&self) -> &[Var<R>];

    fn backward(&self, output: &Tensor<R>, grad: &[R], needs: &[bool]) -> Vec<Option<Vec<R>>>;
}

struct Node<R: Real> {
    id: u64,
    value: Tensor<R>,
    requires_grad: bool,
    function: Option<Box<dyn Function<R>>>,
    grad: RefCell<Option<Vec<R>>>,
}

/// Handle to a value in the compute graph.
///
/// Node ids grow monotonically with creation order, so every operation's
/// inputs carry smaller ids than its output; sorting by id yields a
/// topological order. When no input requires a gradient the operation is not
/// recorded and the inputs can be freed as soon as their handles drop.
pub struct Var<R: Real>(Rc<Node<R>>);

impl<R: Real> Clone for Var<R> {
    fn clone(&self) -> Self {
        Var(Rc::clone(&self.0))
    }
}

impl<R: Real> fmt::Debug for Var<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.0.id)
            .field("shape", &self.0.value.shape())
            .field("requires_grad", &self.0.requires_grad)
            .field("op", &self.0.function.as_ref().map(|f| f.name()))
            .finish()
    }
}

impl<R: Real> Var<R> {
    pub fn leaf(value: Tensor<R>, requires_grad: bool) -> Self {
        Var(Rc::new(Node {
            id: next_node_id(),
            value,
            requires_grad,
            function: None,
            grad: RefCell::new(None),
        }))
    }

    pub fn constant(value: Tensor<R>) -> Self {
        Self::leaf(value, false)
    }

    pub(crate) fn from_op(value: Tensor<R>, function: Box<dyn Function<R>>) -> Self {
        let requires_grad = function.inputs().iter().any(Var::requires_grad);
        Var(Rc::new(Node {
            id: next_node_id(),
            value,
            requires_grad,
            function: requires_grad.then_some(function),
            grad: RefCell::new(None),
        }))
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn value(&self) -> &Tensor<R> {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn data(&self) -> &[R] {
        self.0.value.data()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.function.is_none()
    }

    /// Name of the recorded operation, `None` for leaves and unrecorded values.
    pub fn op_name(&self) -> Option<&'static str> {
        self.0.function.as_ref().map(|f| f.name())
    }

    /// Gradient accumulated by the last `backward`, leaves only.
    pub fn grad(&self) -> Option<Tensor<R>> {
        self.0
            .grad
            .borrow()
            .as_ref()
            .map(|g| Tensor::from_vec(self.shape().to_vec(), g.clone()).expect("gradient shape"))
    }

    /// Nodes reachable from `self` that participate in differentiation, in
    /// descending id order (reverse topological order).
    fn reachable(&self) -> Vec<Var<R>> {
        let mut seen = HashSet::new();
        let mut stack = vec![self.clone()];
        let mut out = Vec::new();
        while let Some(v) = stack.pop() {
            if !v.requires_grad() || !seen.insert(v.id()) {
                continue;
            }
            if let Some(f) = &v.0.function {
                stack.extend(f.inputs().iter().cloned());
            }
            out.push(v);
        }
        out.sort_by_key(|v| std::cmp::Reverse(v.id()));
        out
    }

    /// Clears the gradients of every leaf this value depends on.
    pub fn zero_grad(&self) {
        for v in self.reachable() {
            v.0.grad.replace(None);
        }
    }

    /// Reverse-mode sweep from a scalar loss.
    ///
    /// Each recorded operation is visited once; contributions to a value used
    /// by several consumers are summed before it is processed. Fails if any
    /// reachable leaf still holds a gradient from a previous sweep.
    pub fn backward(&self) -> Result<()> {
        if self.value().len() != 1 {
            return Err(Error::Backward(format!(
                "loss must be a scalar, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Err(Error::Backward("loss does not depend on any value requiring a gradient".into()));
        }
        let order = self.reachable();
        if order.iter().any(|v| v.is_leaf() && v.0.grad.borrow().is_some()) {
            return Err(Error::Backward(
                "gradients from a previous backward pass were not reset".into(),
            ));
        }

        let mut pending: HashMap<u64, Vec<R>> = HashMap::new();
        pending.insert(self.id(), vec![R::ONE]);
        for v in &order {
            let Some(grad) = pending.remove(&v.id()) else { continue };
            match &v.0.function {
                None => {
                    v.0.grad.replace(Some(grad));
                }
                Some(f) => {
                    let inputs = f.inputs();
                    let needs: Vec<bool> = inputs.iter().map(Var::requires_grad).collect();
                    let grads = f.backward(v.value(), &grad, &needs);
                    debug_assert_eq!(grads.len(), inputs.len(), "{} returned wrong arity", f.name());
                    for (input, g) in inputs.iter().zip(grads) {
                        let Some(g) = g else { continue };
                        if !input.requires_grad() {
                            continue;
                        }
                        assert_eq!(g.len(), input.value().len(), "{}: gradient length mismatch", f.name());
                        match pending.get_mut(&input.id()) {
                            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                            None => {
                                pending.insert(input.id(), g);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
