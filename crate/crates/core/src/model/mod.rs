//! Regression-tree ensembles: prediction, interval enclosure over feature
//! boxes, partial evaluation, training, metrics and the JSON model format.
//!
//! Routing is axis-aligned: a split on feature `k` with threshold `t` sends
//! `x` left iff `x[k] < t`, so ties go right.

mod io;
mod metrics;
mod train;

pub use io::{load_model, model_from_json, model_to_json, save_model};
pub use metrics::{pearson, rmse};
pub use train::{train_gbrt, train_gbrt_with_history, TrainConfig};

use crate::error::{Error, Result};
use crate::features::NUM_FEATURES;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

/// A regression tree stored as a node arena with the root at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Self { nodes: vec![Node::Leaf { value }] }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.nodes[0], Node::Leaf { .. })
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match self.nodes[idx] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    idx = if x[feature] < threshold { left } else { right };
                }
            }
        }
    }

    /// Min and max leaf value over leaves reachable from `bx`.
    pub fn range(&self, bx: &FeatureBox) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut stack = vec![0];
        while let Some(idx) = stack.pop() {
            match self.nodes[idx] {
                Node::Leaf { value } => {
                    lo = lo.min(value);
                    hi = hi.max(value);
                }
                Node::Split { feature, threshold, left, right } => {
                    if bx.lo[feature] < threshold {
                        stack.push(left);
                    }
                    if bx.hi[feature] >= threshold {
                        stack.push(right);
                    }
                }
            }
        }
        (lo, hi)
    }

    /// Drop branches unreachable from `bx`; the result is laid out in
    /// preorder and agrees with `self` on every point of the box.
    pub fn restrict(&self, bx: &FeatureBox) -> Tree {
        fn walk(src: &Tree, idx: usize, bx: &FeatureBox, out: &mut Vec<Node>) -> usize {
            match src.nodes[idx] {
                Node::Leaf { value } => {
                    out.push(Node::Leaf { value });
                    out.len() - 1
                }
                Node::Split { feature, threshold, left, right } => {
                    let go_left = bx.lo[feature] < threshold;
                    let go_right = bx.hi[feature] >= threshold;
                    match (go_left, go_right) {
                        (true, false) => walk(src, left, bx, out),
                        (false, true) => walk(src, right, bx, out),
                        _ => {
                            let at = out.len();
                            out.push(Node::Leaf { value: 0.0 });
                            let l = walk(src, left, bx, out);
                            let r = walk(src, right, bx, out);
                            out[at] = Node::Split { feature, threshold, left: l, right: r };
                            at
                        }
                    }
                }
            }
        }
        let mut nodes = Vec::with_capacity(self.nodes.len());
        walk(self, 0, bx, &mut nodes);
        Tree { nodes }
    }

    /// Leaves with the box of feature constraints on the path to them,
    /// as `(value, [(feature, lo, hi)])`; `lo` inclusive, `hi` exclusive.
    pub fn leaf_paths(&self) -> Vec<(f64, Vec<(usize, f64, f64)>)> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, Vec::new())];
        while let Some((idx, path)) = stack.pop() {
            match self.nodes[idx] {
                Node::Leaf { value } => out.push((value, path)),
                Node::Split { feature, threshold, left, right } => {
                    let mut r = path.clone();
                    r.push((feature, threshold, f64::INFINITY));
                    let mut l = path;
                    l.push((feature, f64::NEG_INFINITY, threshold));
                    stack.push((right, r));
                    stack.push((left, l));
                }
            }
        }
        out
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    fn validate(&self, num_features: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::InvariantViolation("tree without nodes".into()));
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            if idx >= self.nodes.len() {
                return Err(Error::InvariantViolation(format!("child index {idx} out of range")));
            }
            if std::mem::replace(&mut seen[idx], true) {
                return Err(Error::InvariantViolation(format!("node {idx} reached twice")));
            }
            match self.nodes[idx] {
                Node::Leaf { value } if !value.is_finite() => {
                    return Err(Error::InvariantViolation("non-finite leaf value".into()))
                }
                Node::Leaf { .. } => {}
                Node::Split { feature, threshold, left, right } => {
                    if feature >= num_features {
                        return Err(Error::InvariantViolation(format!("split feature {feature} out of range")));
                    }
                    if threshold.is_nan() {
                        return Err(Error::InvariantViolation("NaN threshold".into()));
                    }
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        Ok(())
    }
}

/// Closed interval per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl FeatureBox {
    pub fn full(dim: usize) -> Self {
        Self { lo: vec![f64::NEG_INFINITY; dim], hi: vec![f64::INFINITY; dim] }
    }

    pub fn point(x: &[f64]) -> Self {
        Self { lo: x.to_vec(), hi: x.to_vec() }
    }

    /// Fixed entries become degenerate intervals, free ones unbounded.
    pub fn from_partial(fixed: &[Option<f64>]) -> Self {
        Self {
            lo: fixed.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect(),
            hi: fixed.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect(),
        }
    }

    pub fn set(&mut self, k: usize, lo: f64, hi: f64) {
        self.lo[k] = lo;
        self.hi[k] = hi;
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| l <= v && v <= h)
    }

    pub fn is_valid(&self) -> bool {
        self.lo.len() == self.hi.len() && self.lo.iter().zip(&self.hi).all(|(l, h)| l <= h)
    }
}

/// `base_score + Σ_t shrinkage · tree_t(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsemble {
    pub base_score: f64,
    pub shrinkage: f64,
    pub trees: Vec<Tree>,
    pub feature_names: Vec<String>,
}

impl TreeEnsemble {
    pub fn new(base_score: f64, shrinkage: f64, trees: Vec<Tree>) -> Result<Self> {
        let ens = Self {
            base_score,
            shrinkage,
            trees,
            feature_names: crate::features::FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        };
        ens.validate()?;
        Ok(ens)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::InvariantViolation("ensemble needs at least one tree".into()));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(Error::InvariantViolation(format!("shrinkage {} outside (0, 1]", self.shrinkage)));
        }
        if !self.base_score.is_finite() {
            return Err(Error::InvariantViolation("non-finite base score".into()));
        }
        self.trees.iter().try_for_each(|t| t.validate(NUM_FEATURES))
    }

    /// Raw (unclamped) prediction.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut acc = self.base_score;
        for tree in &self.trees {
            acc += self.shrinkage * tree.evaluate(x);
        }
        acc
    }

    /// Prediction clamped to `[0, 1]`, for reporting error rates.
    pub fn predict_clamped(&self, x: &[f64]) -> f64 {
        self.predict(x).clamp(0.0, 1.0)
    }

    /// Sound enclosure of `predict` over the box.
    pub fn predict_interval(&self, bx: &FeatureBox) -> (f64, f64) {
        let mut lo = self.base_score;
        let mut hi = self.base_score;
        for tree in &self.trees {
            let (a, b) = tree.range(bx);
            lo += self.shrinkage * a;
            hi += self.shrinkage * b;
        }
        (lo, hi)
    }

    /// Equivalent ensemble for inputs inside `bx`.
    pub fn restrict(&self, bx: &FeatureBox) -> TreeEnsemble {
        TreeEnsemble {
            base_score: self.base_score,
            shrinkage: self.shrinkage,
            trees: self.trees.iter().map(|t| t.restrict(bx)).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Collapse every split on a fixed feature. For any `x` agreeing with
    /// `fixed` on its fixed entries the result predicts exactly `predict(x)`.
    pub fn partial_evaluate(&self, fixed: &[Option<f64>]) -> TreeEnsemble {
        self.restrict(&FeatureBox::from_partial(fixed))
    }

    pub fn node_count(&self) -> usize {
        self.trees.iter().map(|t| t.nodes.len()).sum()
    }
}
