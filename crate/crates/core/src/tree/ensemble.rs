use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A node of a regression tree. Children are referenced by index into the
/// owning tree's node list, which is stored in preorder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }
}

/// A binary regression tree. `x[feature] <= threshold` descends left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Tree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    /// Index of the leaf reached by `x`.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        loop {
            match self.nodes[idx] {
                Node::Leaf { .. } => return idx,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!(),
        }
    }

    /// Node indices of all leaves, in preorder.
    pub fn leaves(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.is_leaf())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn depth(&self) -> usize {
        fn go(tree: &Tree, idx: usize) -> usize {
            match tree.nodes[idx] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(tree, left).max(go(tree, right)),
            }
        }
        go(self, 0)
    }

    pub fn leaf_value(&self, idx: usize) -> f64 {
        match self.nodes[idx] {
            Node::Leaf { value } => value,
            Node::Split { .. } => panic!("node {idx} is not a leaf"),
        }
    }

    /// Checks the preorder layout: node 0 is the root, every node is
    /// referenced exactly once, and children follow their parent.
    pub(crate) fn validate(&self, num_features: usize) -> std::result::Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        let mut referenced = vec![false; self.nodes.len()];
        referenced[0] = true;
        for (i, node) in self.nodes.iter().enumerate() {
            match *node {
                Node::Leaf { value } => {
                    if !value.is_finite() {
                        return Err(format!("node {i}: non-finite leaf value"));
                    }
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= num_features {
                        return Err(format!(
                            "node {i}: feature {feature} out of range (num_features = {num_features})"
                        ));
                    }
                    if !threshold.is_finite() {
                        return Err(format!("node {i}: non-finite threshold"));
                    }
                    for child in [left, right] {
                        if child <= i || child >= self.nodes.len() {
                            return Err(format!("node {i}: invalid child reference {child}"));
                        }
                        if std::mem::replace(&mut referenced[child], true) {
                            return Err(format!("node {i}: child {child} referenced twice"));
                        }
                    }
                }
            }
        }
        if let Some(orphan) = referenced.iter().position(|r| !r) {
            return Err(format!("node {orphan} is unreachable"));
        }
        Ok(())
    }
}

/// Additive ensemble of regression trees plus a constant offset.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsemble {
    pub trees: Vec<Tree>,
    pub base_offset: f64,
    pub num_features: usize,
}

impl TreeEnsemble {
    pub fn new(trees: Vec<Tree>, base_offset: f64, num_features: usize) -> Result<Self> {
        let ens = TreeEnsemble {
            trees,
            base_offset,
            num_features,
        };
        ens.validate()?;
        Ok(ens)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.base_offset.is_finite() {
            return Err(Error::Model("non-finite base offset".into()));
        }
        for (t, tree) in self.trees.iter().enumerate() {
            tree.validate(self.num_features)
                .map_err(|e| Error::Model(format!("tree {t}: {e}")))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.num_features {
            return Err(Error::DimensionMismatch {
                expected: self.num_features,
                got: x.len(),
            });
        }
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        self.base_offset + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}
