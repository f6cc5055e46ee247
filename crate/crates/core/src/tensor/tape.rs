use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use super::params::ParameterStore;
use super::{Element, Tensor};
use crate::error::{Error, Result};

/// How kernels may schedule their work.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ExecMode {
    /// Single-threaded kernels with a fixed reduction order. Two runs with
    /// the same inputs are bitwise identical.
    Deterministic,
    /// Multi-threaded kernels; segment sums may be reassociated.
    #[default]
    Parallel,
}

impl ExecMode {
    pub fn from_deterministic(deterministic: bool) -> Self {
        if deterministic {
            ExecMode::Deterministic
        } else {
            ExecMode::Parallel
        }
    }

    /// Whether kernels should fan out. Always false without the `parallel`
    /// feature.
    pub fn parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}

/// Maps the output gradient to one optional gradient per parent. The flag
/// slice says which parents need a gradient at all.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&Tensor<T>, &[bool], ExecMode) -> Vec<Option<Tensor<T>>>>;

struct Node<T> {
    op: &'static str,
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    requires_grad: bool,
    param: Option<String>,
}

/// Append-only record of a differentiable computation.
///
/// A node's parents always precede it, so reverse append order is a valid
/// topological order for the backward pass.
pub struct Tape<T: Element> {
    nodes: RefCell<Vec<Node<T>>>,
    mode: ExecMode,
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::with_mode(ExecMode::default())
    }
}

impl<T: Element> fmt::Debug for Tape<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("len", &self.len())
            .field("mode", &self.mode)
            .finish()
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_mode(mode: ExecMode) -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            mode,
        }
    }

    pub fn mode(&self) -> ExecMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Names of the recorded operations, in append order.
    pub fn ops(&self) -> Vec<&'static str> {
        self.nodes.borrow().iter().map(|n| n.op).collect()
    }

    fn push_leaf(&self, value: Rc<Tensor<T>>, requires_grad: bool, param: Option<String>) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            op: if param.is_some() { "param" } else { "leaf" },
            parents: Vec::new(),
            backward: None,
            requires_grad,
            param,
        });
        Var {
            tape: self,
            id,
            value,
            requires_grad,
        }
    }

    /// A value that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push_leaf(Rc::new(value), false, None)
    }

    /// Like [`Tape::constant`] without copying a shared tensor.
    pub fn constant_shared(&self, value: Rc<Tensor<T>>) -> Var<'_, T> {
        self.push_leaf(value, false, None)
    }

    /// An unnamed input whose gradient can be read from [`Gradients`].
    pub fn leaf(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push_leaf(Rc::new(value), true, None)
    }

    /// Reads a trainable tensor from the store. Its gradient is written back
    /// by [`Tape::backward_into`].
    pub fn param(&self, store: &ParameterStore<T>, name: &str) -> Result<Var<'_, T>> {
        let value = store.value(name)?.clone();
        Ok(self.push_leaf(Rc::new(value), true, Some(name.to_string())))
    }

    pub(crate) fn record<F>(
        &self,
        op: &'static str,
        value: Rc<Tensor<T>>,
        parents: &[&Var<'_, T>],
        backward: F,
    ) -> Result<Var<'_, T>>
    where
        F: Fn(&Tensor<T>, &[bool], ExecMode) -> Vec<Option<Tensor<T>>> + 'static,
    {
        if !value.all_finite() {
            return Err(Error::NonFinite { op });
        }
        for p in parents {
            assert!(std::ptr::eq(p.tape, self), "{op}: operands belong to different tapes");
        }
        let requires_grad = parents.iter().any(|p| p.requires_grad);
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            op,
            parents: parents.iter().map(|p| p.id).collect(),
            backward: requires_grad.then(|| Box::new(backward) as BackwardFn<T>),
            requires_grad,
            param: None,
        });
        Ok(Var {
            tape: self,
            id,
            value,
            requires_grad,
        })
    }

    /// Reverse pass from a scalar loss.
    pub fn backward(&self, loss: &Var<'_, T>) -> Result<Gradients<T>> {
        if loss.value.numel() != 1 {
            return Err(Error::NotScalar(loss.value.shape().to_vec()));
        }
        if !loss.requires_grad {
            return Err(Error::NotRecorded);
        }
        let nodes = self.nodes.borrow();
        let mut pending: Vec<Option<Tensor<T>>> = (0..=loss.id).map(|_| None).collect();
        let mut leaves: Vec<Option<Tensor<T>>> = (0..=loss.id).map(|_| None).collect();
        pending[loss.id] = Some(Tensor::ones(loss.value.shape().to_vec()));

        for id in (0..=loss.id).rev() {
            let Some(grad) = pending[id].take() else {
                continue;
            };
            let node = &nodes[id];
            let Some(backward) = &node.backward else {
                leaves[id] = Some(grad);
                continue;
            };
            let needs: Vec<bool> = node.parents.iter().map(|&p| nodes[p].requires_grad).collect();
            let parent_grads = backward(&grad, &needs, self.mode);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for ((&p, g), need) in node.parents.iter().zip(parent_grads).zip(needs) {
                let Some(g) = g else { continue };
                if !need {
                    continue;
                }
                match &mut pending[p] {
                    Some(acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                            *a = *a + *b;
                        }
                    }
                    slot => *slot = Some(g),
                }
            }
        }

        let params = nodes[..=loss.id]
            .iter()
            .enumerate()
            .filter_map(|(id, n)| n.param.clone().map(|name| (name, id)))
            .collect();
        Ok(Gradients { grads: leaves, params })
    }

    /// Runs [`Tape::backward`] and overwrites every gradient accumulator in
    /// the store. Parameters the loss does not reach get zeros.
    pub fn backward_into(&self, loss: &Var<'_, T>, store: &mut ParameterStore<T>) -> Result<()> {
        let grads = self.backward(loss)?;
        grads.write_to(store)
    }
}

/// Gradients of the leaves reached by a backward pass.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    params: Vec<(String, usize)>,
}

impl<T: Element> Gradients<T> {
    pub fn get(&self, var: &Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    pub fn write_to(&self, store: &mut ParameterStore<T>) -> Result<()> {
        store.zero_grads();
        for (name, id) in &self.params {
            if let Some(g) = &self.grads[*id] {
                store.accumulate_grad(name, g)?;
            }
        }
        Ok(())
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone)]
pub struct Var<'t, T: Element> {
    pub(crate) tape: &'t Tape<T>,
    pub(crate) id: usize,
    pub(crate) value: Rc<Tensor<T>>,
    pub(crate) requires_grad: bool,
}

impl<T: Element> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.value.shape())
            .field("requires_grad", &self.requires_grad)
            .finish()
    }
}

impl<'t, T: Element> Var<'t, T> {
    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub(crate) fn mode(&self) -> ExecMode {
        self.tape.mode
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Var<'t, T> {
        self.tape.constant_shared(Rc::clone(&self.value))
    }
}
