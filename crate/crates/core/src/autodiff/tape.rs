use std::cell::RefCell;
use std::rc::Rc;

use super::{AutodiffError, Tensor};

type Backward = Box<dyn Fn(&Tensor) -> Vec<Option<Tensor>>>;

struct Node {
    /// Tape ids of the op's inputs; `None` for constants.
    inputs: Vec<Option<usize>>,
    backward: Option<Backward>,
}

/// Records differentiable operations in execution order.
///
/// A tape built with [`Tape::no_grad`] records nothing: every value it
/// produces is a constant, which makes it the inference path.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    recording: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::new()), recording: true }
    }

    pub fn no_grad() -> Self {
        Self { nodes: RefCell::new(Vec::new()), recording: false }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Tracked input (parameter or differentiable data).
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        if !self.recording {
            return self.constant(value);
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { inputs: Vec::new(), backward: None });
        Var { tape: self, id: Some(nodes.len() - 1), value: Rc::new(value) }
    }

    /// Untracked value; gradients never flow into it.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        Var { tape: self, id: None, value: Rc::new(value) }
    }

    /// Tracked leaf sharing an existing buffer.
    pub fn leaf_rc(&self, value: Rc<Tensor>) -> Var<'_> {
        if !self.recording {
            return self.constant_rc(value);
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { inputs: Vec::new(), backward: None });
        Var { tape: self, id: Some(nodes.len() - 1), value }
    }

    pub fn constant_rc(&self, value: Rc<Tensor>) -> Var<'_> {
        Var { tape: self, id: None, value }
    }

    /// Records an op. `backward` maps the output gradient to one optional
    /// gradient per input, in input order. Ops with no tracked input produce
    /// constants.
    pub fn record<'t>(
        &'t self,
        inputs: &[&Var<'t>],
        value: Tensor,
        backward: impl Fn(&Tensor) -> Vec<Option<Tensor>> + 'static,
    ) -> Var<'t> {
        let ids: Vec<Option<usize>> = inputs.iter().map(|v| v.id).collect();
        if !self.recording || ids.iter().all(Option::is_none) {
            return self.constant(value);
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { inputs: ids, backward: Some(Box::new(backward)) });
        Var { tape: self, id: Some(nodes.len() - 1), value: Rc::new(value) }
    }

    /// Reverse pass from a one-element loss. Each node is visited once, in
    /// reverse recording order.
    pub fn backward(&self, loss: &Var<'_>) -> Result<Gradients, AutodiffError> {
        if loss.value.len() != 1 {
            return Err(AutodiffError::NotScalar(loss.value.shape().to_vec()));
        }
        self.backward_from(loss, Tensor::ones(loss.value.shape()))
    }

    /// Reverse pass seeded with an arbitrary output gradient (a vector-Jacobian
    /// product).
    pub fn backward_from(&self, output: &Var<'_>, seed: Tensor) -> Result<Gradients, AutodiffError> {
        if seed.shape() != output.value.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "backward",
                lhs: output.value.shape().to_vec(),
                rhs: seed.shape().to_vec(),
            });
        }
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        let Some(root) = output.id else {
            return Ok(Gradients { grads });
        };
        grads[root] = Some(seed);
        for i in (0..=root).rev() {
            let node = &nodes[i];
            let Some(backward) = &node.backward else { continue };
            let Some(g) = grads[i].take() else { continue };
            let parent_grads = backward(&g);
            debug_assert_eq!(parent_grads.len(), node.inputs.len());
            for (input, pg) in node.inputs.iter().zip(parent_grads) {
                if let (Some(p), Some(pg)) = (input, pg) {
                    debug_assert!(*p < i);
                    match &mut grads[*p] {
                        Some(acc) => acc.add_assign(&pg),
                        slot => *slot = Some(pg),
                    }
                }
            }
            // interior gradients are not kept past their node
        }
        Ok(Gradients { grads })
    }
}

/// Gradients of leaves after a reverse pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of `var`, zero when it does not influence the loss.
    pub fn get(&self, var: &Var<'_>) -> Tensor {
        var.id
            .and_then(|id| self.grads.get(id).cloned().flatten())
            .unwrap_or_else(|| Tensor::zeros(var.value.shape()))
    }
}

/// A tensor value bound to a tape, with a node id when it is tracked.
#[derive(Clone)]
pub struct Var<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) id: Option<usize>,
    pub(crate) value: Rc<Tensor>,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var").field("id", &self.id).field("shape", &self.value.shape()).finish()
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    /// Shared handle to the value buffer.
    pub fn value_rc(&self) -> Rc<Tensor> {
        Rc::clone(&self.value)
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn is_tracked(&self) -> bool {
        self.id.is_some()
    }

    /// Same value, cut off from the graph.
    pub fn detach(&self) -> Var<'t> {
        Var { tape: self.tape, id: None, value: Rc::clone(&self.value) }
    }
}
