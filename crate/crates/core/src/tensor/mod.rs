//! Dense tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is a shared handle to an immutable value buffer plus the
//! bookkeeping needed to backpropagate: the nodes that produced it and a
//! closure computing parent gradients from the output gradient. Graphs are
//! built implicitly by calling operations; [`Tensor::backward`] walks the
//! graph once in reverse topological order.
//!
//! Gradients are only stored on leaf tensors created with
//! [`Tensor::param`]; interior gradients flow through a scratch map during
//! the backward pass. Repeated backward calls accumulate into leaf
//! gradients until [`Tensor::zero_grad`] resets them.
//!
//! The element type is generic: production code runs `f32`, while gradient
//! verification runs the same graphs in `f64` against central finite
//! differences.

mod conv;
mod nn;
mod ops;

pub use conv::{conv2d, deconv2d};
pub use nn::{
    cosine_loss, l2_normalize_channels, l2_normalize_rows, leaky_relu, linear, max_fuse,
    softmax_cross_entropy, softplus,
};
pub use ops::{abs, add, affine, concat, mean, mul, repeat_rows, reshape, sub, sum};

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::{Ref, RefCell};
use core::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

/// Element type of tensors: `f32` in production, `f64` for gradient checks.
pub trait Scalar:
    num_traits::Float + core::fmt::Debug + core::fmt::Display + Default + Copy + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn from_usize(v: usize) -> Self {
        Self::from_f64(v as f64)
    }
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Context handed to an operation's backward closure.
pub(crate) struct BackCtx<'a, T: Scalar> {
    /// Gradient of the loss with respect to this node's output.
    pub grad: &'a [T],
    /// The node's inputs, in the order they were given to the operation.
    pub parents: &'a [Tensor<T>],
    /// The node's forward output values.
    pub out: &'a [T],
}

type BackFn<T> = Box<dyn Fn(&BackCtx<'_, T>) -> Vec<Option<Vec<T>>>>;

struct Inner<T: Scalar> {
    id: u64,
    shape: Vec<usize>,
    values: RefCell<Vec<T>>,
    requires_grad: bool,
    /// Accumulated gradient; present on leaves only.
    grad: RefCell<Option<Vec<T>>>,
    parents: Vec<Tensor<T>>,
    backward: Option<BackFn<T>>,
}

fn next_id() -> u64 {
    static NEXT: AtomicU64 = AtomicU64::new(1);
    NEXT.fetch_add(1, Ordering::Relaxed)
}

/// Shared handle to a node of the computation graph.
pub struct Tensor<T: Scalar> {
    inner: Rc<Inner<T>>,
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor { inner: Rc::clone(&self.inner) }
    }
}

impl<T: Scalar> core::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

impl<T: Scalar> Tensor<T> {
    fn from_inner(
        shape: Vec<usize>,
        values: Vec<T>,
        requires_grad: bool,
        parents: Vec<Tensor<T>>,
        backward: Option<BackFn<T>>,
    ) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Tensor {
            inner: Rc::new(Inner {
                id: next_id(),
                shape,
                values: RefCell::new(values),
                requires_grad,
                grad: RefCell::new(None),
                parents,
                backward,
            }),
        }
    }

    /// Constant leaf tensor (no gradient tracking).
    pub fn new(shape: &[usize], values: Vec<T>) -> Result<Self> {
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::ShapeMismatch {
                op: "Tensor::new",
                detail: alloc::format!(
                    "shape {:?} needs {} values, got {}",
                    shape,
                    shape.iter().product::<usize>(),
                    values.len()
                ),
            });
        }
        Ok(Self::from_inner(shape.to_vec(), values, false, Vec::new(), None))
    }

    /// Trainable leaf tensor; gradients accumulate here.
    pub fn param(shape: &[usize], values: Vec<T>) -> Result<Self> {
        let t = Self::new(shape, values)?;
        Ok(Self::from_inner(t.inner.shape.clone(), t.to_vec(), true, Vec::new(), None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::from_inner(shape.to_vec(), vec![T::zero(); n], false, Vec::new(), None)
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Self::from_inner(shape.to_vec(), vec![value; n], false, Vec::new(), None)
    }

    pub fn scalar(value: T) -> Self {
        Self::from_inner(vec![1], vec![value], false, Vec::new(), None)
    }

    /// Internal: create an operation output node.
    pub(crate) fn op_node(
        shape: Vec<usize>,
        values: Vec<T>,
        parents: Vec<Tensor<T>>,
        backward: BackFn<T>,
    ) -> Self {
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        if requires_grad {
            Self::from_inner(shape, values, true, parents, Some(backward))
        } else {
            // Dead branch for autodiff: keep it a cheap constant.
            Self::from_inner(shape, values, false, Vec::new(), None)
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub(crate) fn id(&self) -> u64 {
        self.inner.id
    }

    /// Borrow the value buffer.
    pub fn data(&self) -> Ref<'_, [T]> {
        Ref::map(self.inner.values.borrow(), |v| v.as_slice())
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.inner.values.borrow().clone()
    }

    pub fn item(&self) -> Result<T> {
        if self.numel() != 1 {
            return Err(Error::NotScalar { op: "Tensor::item", shape: self.inner.shape.clone() });
        }
        Ok(self.inner.values.borrow()[0])
    }

    /// Accumulated gradient of a leaf, if any backward pass has reached it.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.grad.borrow().clone()
    }

    /// Clear the accumulated gradient.
    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// Constant copy of this tensor, cut off from the graph.
    pub fn detach(&self) -> Tensor<T> {
        Self::from_inner(self.inner.shape.clone(), self.to_vec(), false, Vec::new(), None)
    }

    /// Same values in another precision, cut off from the graph.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        let vals = self.data().iter().map(|&v| U::from_f64(Scalar::to_f64(v))).collect();
        Tensor::<U>::from_inner(self.inner.shape.clone(), vals, false, Vec::new(), None)
    }

    /// Overwrite the values of a leaf tensor (optimizer update path).
    pub fn update_values(&self, f: impl FnOnce(&mut [T])) {
        f(self.inner.values.borrow_mut().as_mut_slice());
    }

    fn accumulate_leaf_grad(&self, g: &[T]) {
        let mut cell = self.inner.grad.borrow_mut();
        match cell.as_mut() {
            Some(buf) => {
                for (b, gi) in buf.iter_mut().zip(g) {
                    *b = *b + *gi;
                }
            }
            None => *cell = Some(g.to_vec()),
        }
    }

    /// Reverse-mode sweep from a scalar output.
    ///
    /// Accumulates gradients into every reachable leaf created with
    /// [`Tensor::param`]; repeated calls keep accumulating until
    /// [`Tensor::zero_grad`]. Calling on a tensor with more than one element
    /// is an error.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::NotScalar { op: "backward", shape: self.inner.shape.clone() });
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.topo_order();
        let mut flowing: BTreeMap<u64, Vec<T>> = BTreeMap::new();
        flowing.insert(self.id(), vec![T::one()]);
        for node in order.iter().rev() {
            let Some(grad) = flowing.remove(&node.id()) else { continue };
            match &node.inner.backward {
                None => node.accumulate_leaf_grad(&grad),
                Some(back) => {
                    let out = node.inner.values.borrow();
                    let ctx = BackCtx { grad: &grad, parents: &node.inner.parents, out: &out };
                    let parent_grads = back(&ctx);
                    drop(out);
                    debug_assert_eq!(parent_grads.len(), node.inner.parents.len());
                    for (parent, pg) in node.inner.parents.iter().zip(parent_grads) {
                        let Some(pg) = pg else { continue };
                        if !parent.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(pg.len(), parent.numel());
                        match flowing.get_mut(&parent.id()) {
                            Some(buf) => {
                                for (b, gi) in buf.iter_mut().zip(&pg) {
                                    *b = *b + *gi;
                                }
                            }
                            None => {
                                flowing.insert(parent.id(), pg);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Nodes of the gradient-relevant subgraph, parents before children.
    fn topo_order(&self) -> Vec<Tensor<T>> {
        enum Step<T: Scalar> {
            Enter(Tensor<T>),
            Exit(Tensor<T>),
        }
        let mut order = Vec::new();
        let mut seen = BTreeSet::new();
        let mut stack = vec![Step::Enter(self.clone())];
        while let Some(step) = stack.pop() {
            match step {
                Step::Enter(node) => {
                    if !seen.insert(node.id()) {
                        continue;
                    }
                    stack.push(Step::Exit(node.clone()));
                    for parent in &node.inner.parents {
                        if parent.requires_grad() && !seen.contains(&parent.id()) {
                            stack.push(Step::Enter(parent.clone()));
                        }
                    }
                }
                Step::Exit(node) => order.push(node),
            }
        }
        order
    }
}
