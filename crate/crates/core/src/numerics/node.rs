//! Graph nodes and the reverse-mode sweep.

use std::cell::{Ref, RefCell};
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use indexmap::IndexMap;

use crate::numerics::{NumericsError, Result, Tensor};

/// Backward rule for one edge: (gradient at this node, accumulator for the
/// parent's gradient this pass).
pub(crate) type GradFn = Box<dyn Fn(&Tensor, &mut Tensor)>;

pub(crate) struct NodeData {
    pub(crate) value: RefCell<Tensor>,
    pub(crate) grad: RefCell<Tensor>,
    pub(crate) parents: Vec<(Node, GradFn)>,
    pub(crate) op_tag: &'static str,
}

/// A value in the computation graph with a gradient slot.
///
/// Cloning a `Node` is cheap (reference-counted handle). The value of a leaf
/// (parameter or input) may be mutated in place between passes; values of
/// derived nodes are fixed at construction.
#[derive(Clone)]
pub struct Node(pub(crate) Rc<NodeData>);

impl fmt::Debug for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Node")
            .field("op", &self.0.op_tag)
            .field("shape", &self.0.value.borrow().shape())
            .finish()
    }
}

impl Node {
    /// A leaf node with no parents (input or parameter).
    pub fn leaf(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape().to_vec());
        Node(Rc::new(NodeData {
            value: RefCell::new(value),
            grad: RefCell::new(grad),
            parents: Vec::new(),
            op_tag: "leaf",
        }))
    }

    pub(crate) fn from_op(
        value: Tensor,
        parents: Vec<(Node, GradFn)>,
        op_tag: &'static str,
    ) -> Self {
        let grad = Tensor::zeros(value.shape().to_vec());
        Node(Rc::new(NodeData {
            value: RefCell::new(value),
            grad: RefCell::new(grad),
            parents,
            op_tag,
        }))
    }

    pub fn value(&self) -> Ref<'_, Tensor> {
        self.0.value.borrow()
    }

    pub fn value_clone(&self) -> Tensor {
        self.0.value.borrow().clone()
    }

    pub fn grad(&self) -> Ref<'_, Tensor> {
        self.0.grad.borrow()
    }

    pub fn grad_clone(&self) -> Tensor {
        self.0.grad.borrow().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.0.value.borrow().shape().to_vec()
    }

    pub fn op_tag(&self) -> &'static str {
        self.0.op_tag
    }

    /// Overwrite the value of a leaf in place. Shape must not change.
    pub fn set_value(&self, value: Tensor) -> Result<()> {
        let mut slot = self.0.value.borrow_mut();
        if slot.shape() != value.shape() {
            return Err(NumericsError::ShapeMismatch(format!(
                "set_value {:?} into slot {:?}",
                value.shape(),
                slot.shape()
            )));
        }
        *slot = value;
        Ok(())
    }

    /// Mutate the value through a closure (used by optimizers and grad_check).
    pub fn update_value(&self, f: impl FnOnce(&mut Tensor)) {
        f(&mut self.0.value.borrow_mut());
    }

    pub fn zero_grad(&self) {
        self.0.grad.borrow_mut().fill(0.0);
    }

    fn ptr(&self) -> *const NodeData {
        Rc::as_ptr(&self.0)
    }

    /// Reverse-mode sweep from a scalar loss.
    ///
    /// Gradients are accumulated: calling backward twice without zeroing
    /// doubles every gradient. Nodes not reachable from the loss are left
    /// untouched.
    pub fn backward(&self) -> Result<()> {
        if !self.value().is_scalar() {
            return Err(NumericsError::InvalidArgument(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape()
            )));
        }

        // Iterative post-order DFS over parent edges. The post-order list has
        // every node after all of its parents, so the reversed list visits
        // each node before any of its parents.
        let mut order: Vec<Node> = Vec::new();
        let mut index: HashMap<*const NodeData, usize> = HashMap::new();
        let mut visiting: Vec<(Node, usize)> = vec![(self.clone(), 0)];
        let mut seen: HashMap<*const NodeData, bool> = HashMap::new();
        seen.insert(self.ptr(), false);
        while let Some((node, next_parent)) = visiting.pop() {
            let n_parents = node.0.parents.len();
            let mut advanced = false;
            let mut cursor = next_parent;
            while cursor < n_parents {
                let parent = node.0.parents[cursor].0.clone();
                cursor += 1;
                if !seen.contains_key(&parent.ptr()) {
                    seen.insert(parent.ptr(), false);
                    visiting.push((node.clone(), cursor));
                    visiting.push((parent, 0));
                    advanced = true;
                    break;
                }
            }
            if !advanced {
                index.insert(node.ptr(), order.len());
                order.push(node);
            }
        }

        // Per-pass gradient buffers keep accumulation semantics exact.
        let mut pass: Vec<Option<Tensor>> = vec![None; order.len()];
        pass[order.len() - 1] = Some(Tensor::scalar(1.0));

        for pos in (0..order.len()).rev() {
            let Some(out_grad) = pass[pos].take() else {
                continue;
            };
            let node = &order[pos];
            for (parent, rule) in &node.0.parents {
                let pidx = index[&parent.ptr()];
                let slot = pass[pidx]
                    .get_or_insert_with(|| Tensor::zeros(parent.shape()));
                rule(&out_grad, slot);
            }
            node.0.grad.borrow_mut().add_assign(&out_grad);
        }
        Ok(())
    }
}

/// Named trainable leaves with deterministic iteration order.
#[derive(Clone, Default)]
pub struct ParameterSet {
    entries: IndexMap<String, Node>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self {
            entries: IndexMap::new(),
        }
    }

    /// Insert a fresh leaf under `name` and return its handle.
    pub fn insert(&mut self, name: &str, value: Tensor) -> Node {
        assert!(
            !self.entries.contains_key(name),
            "duplicate parameter name {name}"
        );
        let node = Node::leaf(value);
        self.entries.insert(name.to_string(), node.clone());
        node
    }

    pub fn get(&self, name: &str) -> &Node {
        self.entries
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn try_get(&self, name: &str) -> Option<&Node> {
        self.entries.get(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Insertion-ordered iteration; this order is the documented draw and
    /// update order everywhere in the crate.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Node)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn zero_grads(&self) {
        for (_, node) in self.iter() {
            node.zero_grad();
        }
    }

    /// Total number of scalar coordinates.
    pub fn coordinate_count(&self) -> usize {
        self.iter().map(|(_, n)| n.value().len()).sum()
    }

    /// Copy of every value, in iteration order.
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.iter().map(|(_, n)| n.value_clone()).collect()
    }

    pub fn restore(&self, snapshot: &[Tensor]) {
        assert_eq!(snapshot.len(), self.entries.len());
        for ((_, node), saved) in self.iter().zip(snapshot.iter()) {
            node.set_value(saved.clone()).expect("snapshot shape");
        }
    }

    /// Set every parameter to zero (test helper for zero-forward contracts).
    pub fn zero_all_values(&self) {
        for (_, node) in self.iter() {
            node.update_value(|t| t.fill(0.0));
        }
    }
}
