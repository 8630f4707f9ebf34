//! Reverse-mode autodiff tensor.
//!
//! A [`Tensor`] is a reference-counted node in an expression graph built
//! eagerly by the operations in this module's siblings. Calling
//! [`Tensor::backward`] on a scalar loss walks the graph once in reverse
//! topological order and accumulates gradients into every node that
//! requires them. Graphs are ephemeral: parameters live on as leaf tensors
//! across steps while interior nodes drop when the loss goes out of scope.

use std::cell::{Ref, RefCell};
use std::collections::HashSet;
use std::fmt;
use std::rc::Rc;

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFiniteValue { op: &'static str },
    #[error("backward needs a scalar loss, got {len} elements")]
    NotScalarLoss { len: usize },
    #[error("missing gradient for parameter {name}")]
    MissingGrad { name: String },
    #[error("spatial dims must be even for 2x2 pooling, got {h}x{w}")]
    OddSpatialDims { h: usize, w: usize },
    #[error("invalid argument: {0}")]
    InvalidArg(&'static str),
}

/// Gradient rule: given this node's gradient, add contributions into the
/// parents' gradient buffers.
pub(crate) type BackwardFn = Box<dyn Fn(&[f64], &[Tensor])>;

pub(crate) struct Node {
    shape: Vec<usize>,
    values: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    /// Whether this node participates in gradient propagation (it is a
    /// differentiable leaf, or depends on one).
    needs_grad: bool,
    parents: Vec<Tensor>,
    backward: Option<BackwardFn>,
}

/// A shared handle to one node of the autodiff graph.
#[derive(Clone)]
pub struct Tensor(pub(crate) Rc<Node>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("needs_grad", &self.0.needs_grad)
            .finish()
    }
}

pub(crate) fn check_finite(values: &[f64], op: &'static str) -> Result<(), TensorError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFiniteValue { op })
    }
}

/// Frame-sized buffers sit above glibc's default mmap threshold, so without
/// this every op pays kernel page-zeroing on alloc and an unmap on drop,
/// which costs more than the arithmetic. Raising the thresholds keeps freed
/// blocks on the in-process free list.
#[cfg(all(target_os = "linux", target_env = "gnu"))]
fn tune_allocator() {
    use std::sync::Once;
    static ONCE: Once = Once::new();
    ONCE.call_once(|| unsafe {
        libc::mallopt(libc::M_MMAP_THRESHOLD, 1 << 30);
        libc::mallopt(libc::M_TRIM_THRESHOLD, 1 << 30);
    });
}

#[cfg(not(all(target_os = "linux", target_env = "gnu")))]
fn tune_allocator() {}

impl Tensor {
    /// A differentiable leaf (a parameter or a checked model input).
    pub fn leaf(shape: Vec<usize>, values: Vec<f64>, requires_grad: bool) -> Result<Self, TensorError> {
        tune_allocator();
        if shape.iter().product::<usize>() != values.len() {
            return Err(TensorError::ShapeMismatch {
                op: "leaf",
                detail: format!("shape {:?} does not hold {} values", shape, values.len()),
            });
        }
        check_finite(&values, "leaf")?;
        Ok(Tensor(Rc::new(Node {
            shape,
            values: RefCell::new(values),
            grad: RefCell::new(None),
            needs_grad: requires_grad,
            parents: Vec::new(),
            backward: None,
        })))
    }

    /// A non-differentiable constant.
    pub fn constant(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, TensorError> {
        Self::leaf(shape, values, false)
    }

    pub fn scalar(v: f64) -> Result<Self, TensorError> {
        Self::constant(vec![1], vec![v])
    }

    /// Interior node constructor used by the op implementations.
    pub(crate) fn from_op(
        op: &'static str,
        shape: Vec<usize>,
        values: Vec<f64>,
        parents: Vec<Tensor>,
        backward: BackwardFn,
    ) -> Result<Self, TensorError> {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        check_finite(&values, op)?;
        let needs_grad = parents.iter().any(|p| p.0.needs_grad);
        Ok(Tensor(Rc::new(Node {
            shape,
            values: RefCell::new(values),
            grad: RefCell::new(None),
            needs_grad,
            parents,
            backward: if needs_grad { Some(backward) } else { None },
        })))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn len(&self) -> usize {
        self.0.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn needs_grad(&self) -> bool {
        self.0.needs_grad
    }

    /// Borrow of the forward values.
    pub fn values(&self) -> Ref<'_, Vec<f64>> {
        self.0.values.borrow()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.values.borrow().clone()
    }

    /// The scalar payload of a one-element tensor.
    pub fn item(&self) -> Result<f64, TensorError> {
        if self.len() != 1 {
            return Err(TensorError::NotScalarLoss { len: self.len() });
        }
        Ok(self.0.values.borrow()[0])
    }

    /// Overwrite a leaf's values in place (used by the optimizer). The next
    /// forward pass picks the new values up automatically.
    pub fn set_values(&self, values: &[f64]) -> Result<(), TensorError> {
        if values.len() != self.len() {
            return Err(TensorError::ShapeMismatch {
                op: "set_values",
                detail: format!("expected {} values, got {}", self.len(), values.len()),
            });
        }
        check_finite(values, "set_values")?;
        self.0.values.borrow_mut().copy_from_slice(values);
        Ok(())
    }

    /// Copy of the accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    pub(crate) fn accumulate_grad(&self, contribution: &[f64]) {
        if !self.0.needs_grad {
            return;
        }
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, ci) in g.iter_mut().zip(contribution) {
                    *gi += ci;
                }
            }
            None => *slot = Some(contribution.to_vec()),
        }
    }

    /// Like [`accumulate_grad`] but takes ownership, so the first
    /// contribution moves into the slot instead of being copied.
    pub(crate) fn accumulate_grad_owned(&self, contribution: Vec<f64>) {
        if !self.0.needs_grad {
            return;
        }
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, ci) in g.iter_mut().zip(&contribution) {
                    *gi += ci;
                }
            }
            None => *slot = Some(contribution),
        }
    }

    /// Reverse-mode sweep from a scalar loss. Gradients accumulate into
    /// every reachable node with `needs_grad`; repeated calls keep adding
    /// unless the leaves are cleared with [`Tensor::zero_grad`].
    pub fn backward(&self) -> Result<(), TensorError> {
        if self.len() != 1 {
            return Err(TensorError::NotScalarLoss { len: self.len() });
        }
        if !self.0.needs_grad {
            return Ok(());
        }
        let order = self.topo_order();
        self.accumulate_grad(&[1.0]);
        for node in order.iter().rev() {
            if let Some(bw) = &node.0.backward {
                let g = node.0.grad.borrow();
                if let Some(g) = g.as_deref() {
                    bw(g, &node.0.parents);
                }
            }
        }
        // Interior gradients are scratch; free them so repeated backward
        // calls start clean and memory returns early.
        for node in order {
            if node.0.backward.is_some() {
                if !Rc::ptr_eq(&node.0, &self.0) {
                    *node.0.grad.borrow_mut() = None;
                }
            }
        }
        Ok(())
    }

    /// Parents-before-children ordering of the reachable subgraph that
    /// needs gradients.
    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut seen: HashSet<*const Node> = HashSet::new();
        // Iterative DFS; the graph can be thousands of nodes deep.
        enum Phase {
            Enter(Tensor),
            Exit(Tensor),
        }
        let mut stack = vec![Phase::Enter(self.clone())];
        while let Some(phase) = stack.pop() {
            match phase {
                Phase::Enter(t) => {
                    let ptr = Rc::as_ptr(&t.0);
                    if seen.contains(&ptr) || !t.0.needs_grad {
                        continue;
                    }
                    seen.insert(ptr);
                    stack.push(Phase::Exit(t.clone()));
                    for p in &t.0.parents {
                        stack.push(Phase::Enter(p.clone()));
                    }
                }
                Phase::Exit(t) => order.push(t),
            }
        }
        order
    }
}
