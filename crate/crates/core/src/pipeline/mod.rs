//! The pipeline genome.
//!
//! A [`PipelineTree`] is an expression tree whose dataset-typed nodes are
//! operators or copies of the input; integer hyperparameters hang off the
//! operator nodes. A valid tree has a classifier at the root, keeps every
//! hyperparameter inside its range and holds at most [`MAX_TREE_SIZE`]
//! dataset-typed nodes.

mod eval;
mod sexpr;

use std::fmt;
use std::ops::RangeInclusive;

use rand::Rng;

use crate::seed::rng_from_seed;

pub use eval::{crossval_pipeline, evaluate_pipeline, evaluate_traced, node_seed, StepRecord, Trace};
pub use sexpr::parse_pipeline;

pub const MAX_DEPTH_RANGE: RangeInclusive<u32> = 1..=10;
pub const N_TREES_RANGE: RangeInclusive<u32> = 10..=500;
pub const N_PAIRS_RANGE: RangeInclusive<u32> = 1..=50;

/// Cap on dataset-typed nodes (operators plus input leaves).
pub const MAX_TREE_SIZE: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Node {
    Input,
    ClassifyDt { child: Box<Node>, max_depth: u32 },
    ClassifyRf { child: Box<Node>, n_trees: u32 },
    SelectPairs { child: Box<Node>, n_pairs: u32 },
    Combine { left: Box<Node>, right: Box<Node> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Input,
    ClassifyDt,
    ClassifyRf,
    SelectPairs,
    Combine,
}

impl NodeKind {
    pub fn is_classifier(self) -> bool {
        matches!(self, NodeKind::ClassifyDt | NodeKind::ClassifyRf)
    }

    /// Operator name as written in pipeline expressions.
    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Input => "input",
            NodeKind::ClassifyDt => "dt",
            NodeKind::ClassifyRf => "rf",
            NodeKind::SelectPairs => "pairs",
            NodeKind::Combine => "combine",
        }
    }
}

/// Which node kinds search is allowed to create.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorSet {
    Full,
    /// Classifier chains over the input only: no pair selection, no merges.
    ModelsOnly,
}

impl OperatorSet {
    pub fn kinds(self) -> &'static [NodeKind] {
        match self {
            OperatorSet::Full => &[
                NodeKind::Input,
                NodeKind::ClassifyDt,
                NodeKind::ClassifyRf,
                NodeKind::SelectPairs,
                NodeKind::Combine,
            ],
            OperatorSet::ModelsOnly => &[NodeKind::Input, NodeKind::ClassifyDt, NodeKind::ClassifyRf],
        }
    }

    /// Operator kinds only (no input leaf).
    pub fn operators(self) -> &'static [NodeKind] {
        &self.kinds()[1..]
    }

    pub fn allows(self, kind: NodeKind) -> bool {
        self.kinds().contains(&kind)
    }
}

impl Node {
    pub fn kind(&self) -> NodeKind {
        match self {
            Node::Input => NodeKind::Input,
            Node::ClassifyDt { .. } => NodeKind::ClassifyDt,
            Node::ClassifyRf { .. } => NodeKind::ClassifyRf,
            Node::SelectPairs { .. } => NodeKind::SelectPairs,
            Node::Combine { .. } => NodeKind::Combine,
        }
    }

    pub fn children(&self) -> Vec<&Node> {
        match self {
            Node::Input => vec![],
            Node::ClassifyDt { child, .. } | Node::ClassifyRf { child, .. } | Node::SelectPairs { child, .. } => {
                vec![child]
            }
            Node::Combine { left, right } => vec![left, right],
        }
    }

    fn children_mut(&mut self) -> Vec<&mut Node> {
        match self {
            Node::Input => vec![],
            Node::ClassifyDt { child, .. } | Node::ClassifyRf { child, .. } | Node::SelectPairs { child, .. } => {
                vec![child]
            }
            Node::Combine { left, right } => vec![left, right],
        }
    }

    /// Dataset-typed nodes in this subtree.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    /// Operator levels on the longest path; an input leaf has depth 0.
    pub fn depth(&self) -> usize {
        match self {
            Node::Input => 0,
            _ => 1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0),
        }
    }

    /// Node kinds in pre-order.
    pub fn kinds(&self) -> Vec<NodeKind> {
        let mut out = Vec::new();
        self.visit(&mut |n| out.push(n.kind()));
        out
    }

    fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Node)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    /// The `index`-th node in pre-order.
    pub fn get(&self, index: usize) -> Option<&Node> {
        let mut seen = 0;
        self.find(index, &mut seen)
    }

    fn find(&self, index: usize, seen: &mut usize) -> Option<&Node> {
        if *seen == index {
            return Some(self);
        }
        *seen += 1;
        for c in self.children() {
            if let Some(n) = c.find(index, seen) {
                return Some(n);
            }
        }
        None
    }

    pub fn get_mut(&mut self, index: usize) -> Option<&mut Node> {
        let mut seen = 0;
        self.find_mut(index, &mut seen)
    }

    fn find_mut(&mut self, index: usize, seen: &mut usize) -> Option<&mut Node> {
        if *seen == index {
            return Some(self);
        }
        *seen += 1;
        for c in self.children_mut() {
            if let Some(n) = c.find_mut(index, seen) {
                return Some(n);
            }
        }
        None
    }

    /// Number of integer hyperparameter leaves in this subtree.
    pub fn hyperparameter_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |node| {
            if !matches!(node, Node::Input | Node::Combine { .. }) {
                n += 1;
            }
        });
        n
    }

    /// Mutable handle on the `index`-th hyperparameter leaf in pre-order,
    /// with its allowed range.
    pub fn hyperparameter_mut(&mut self, index: usize) -> Option<(&mut u32, RangeInclusive<u32>)> {
        let mut seen = 0;
        self.find_hyper(index, &mut seen)
    }

    fn find_hyper(&mut self, index: usize, seen: &mut usize) -> Option<(&mut u32, RangeInclusive<u32>)> {
        let is_target = !matches!(self, Node::Input | Node::Combine { .. }) && *seen == index;
        if !matches!(self, Node::Input | Node::Combine { .. }) {
            *seen += 1;
        }
        if is_target {
            return match self {
                Node::ClassifyDt { max_depth, .. } => Some((max_depth, MAX_DEPTH_RANGE)),
                Node::ClassifyRf { n_trees, .. } => Some((n_trees, N_TREES_RANGE)),
                Node::SelectPairs { n_pairs, .. } => Some((n_pairs, N_PAIRS_RANGE)),
                _ => unreachable!(),
            };
        }
        for c in self.children_mut() {
            if let Some(h) = c.find_hyper(index, seen) {
                return Some(h);
            }
        }
        None
    }

    fn hyperparameters_in_range(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |n| {
            ok &= match n {
                Node::ClassifyDt { max_depth, .. } => MAX_DEPTH_RANGE.contains(max_depth),
                Node::ClassifyRf { n_trees, .. } => N_TREES_RANGE.contains(n_trees),
                Node::SelectPairs { n_pairs, .. } => N_PAIRS_RANGE.contains(n_pairs),
                _ => true,
            }
        });
        ok
    }

    /// Builds an operator node of `kind` over `child`, drawing any
    /// hyperparameter uniformly. For a merge, `child` becomes the left input
    /// and `other` the right.
    pub(crate) fn operator_over<R: Rng + ?Sized>(kind: NodeKind, child: Node, other: Node, rng: &mut R) -> Node {
        let child = Box::new(child);
        match kind {
            NodeKind::ClassifyDt => Node::ClassifyDt {
                child,
                max_depth: rng.gen_range(MAX_DEPTH_RANGE),
            },
            NodeKind::ClassifyRf => Node::ClassifyRf {
                child,
                n_trees: rng.gen_range(N_TREES_RANGE),
            },
            NodeKind::SelectPairs => Node::SelectPairs {
                child,
                n_pairs: rng.gen_range(N_PAIRS_RANGE),
            },
            NodeKind::Combine => Node::Combine {
                left: child,
                right: Box::new(other),
            },
            NodeKind::Input => Node::Input,
        }
    }

    /// Grow-method random subtree. `level` is the operator level of this
    /// node (the root is level 1); below `max_depth` only input leaves are
    /// placed.
    pub(crate) fn random<R: Rng + ?Sized>(
        rng: &mut R,
        level: u32,
        max_depth: u32,
        ops: OperatorSet,
        classifier_only: bool,
    ) -> Node {
        if level > max_depth {
            return Node::Input;
        }
        let kind = if classifier_only {
            [NodeKind::ClassifyDt, NodeKind::ClassifyRf][rng.gen_range(0..2)]
        } else {
            let kinds = ops.kinds();
            kinds[rng.gen_range(0..kinds.len())]
        };
        match kind {
            NodeKind::Input => Node::Input,
            NodeKind::Combine => {
                let left = Node::random(rng, level + 1, max_depth, ops, false);
                let right = Node::random(rng, level + 1, max_depth, ops, false);
                Node::Combine {
                    left: Box::new(left),
                    right: Box::new(right),
                }
            }
            k => {
                let child = Node::random(rng, level + 1, max_depth, ops, false);
                Node::operator_over(k, child, Node::Input, rng)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PipelineTree {
    root: Node,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Invalid {
    RootNotClassifier,
    HyperparameterOutOfRange,
    TooLarge(usize),
}

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Invalid::RootNotClassifier => write!(f, "root must be a classifier"),
            Invalid::HyperparameterOutOfRange => write!(f, "hyperparameter out of range"),
            Invalid::TooLarge(n) => write!(f, "pipeline has {n} nodes; the limit is {MAX_TREE_SIZE}"),
        }
    }
}

/// Checks every genome invariant on a bare node.
pub fn check_root(root: &Node) -> std::result::Result<(), Invalid> {
    if !root.kind().is_classifier() {
        return Err(Invalid::RootNotClassifier);
    }
    if !root.hyperparameters_in_range() {
        return Err(Invalid::HyperparameterOutOfRange);
    }
    let size = root.size();
    if size > MAX_TREE_SIZE {
        return Err(Invalid::TooLarge(size));
    }
    Ok(())
}

impl PipelineTree {
    pub fn new(root: Node) -> std::result::Result<Self, Invalid> {
        check_root(&root)?;
        Ok(PipelineTree { root })
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn into_root(self) -> Node {
        self.root
    }

    /// Operator count: classifiers, selectors and merges. Input leaves and
    /// hyperparameters do not count.
    pub fn complexity(&self) -> usize {
        self.root.kinds().iter().filter(|k| **k != NodeKind::Input).count()
    }

    pub fn size(&self) -> usize {
        self.root.size()
    }

    /// Random valid pipeline from `seed` using every operator kind.
    pub fn random(seed: u64, max_depth: u32) -> Self {
        Self::random_with(&mut rng_from_seed(seed), max_depth, OperatorSet::Full)
    }

    /// Grow-method generation with the root forced to a classifier. Draws
    /// again on the rare tree that exceeds the size cap.
    pub fn random_with<R: Rng + ?Sized>(rng: &mut R, max_depth: u32, ops: OperatorSet) -> Self {
        let max_depth = max_depth.max(1);
        loop {
            let root = Node::random(rng, 1, max_depth, ops, true);
            if let Ok(tree) = PipelineTree::new(root) {
                return tree;
            }
        }
    }
}

/// Canonical expression text, e.g. `(rf (pairs input n=3) trees=100)`.
impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Input => write!(f, "input"),
            Node::ClassifyDt { child, max_depth } => write!(f, "(dt {child} depth={max_depth})"),
            Node::ClassifyRf { child, n_trees } => write!(f, "(rf {child} trees={n_trees})"),
            Node::SelectPairs { child, n_pairs } => write!(f, "(pairs {child} n={n_pairs})"),
            Node::Combine { left, right } => write!(f, "(combine {left} {right})"),
        }
    }
}

impl fmt::Display for PipelineTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

pub fn serialize_pipeline(p: &PipelineTree) -> String {
    p.to_string()
}

/// Result of evaluating a pipeline. A failed evaluation ranks below every
/// score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fitness {
    Failed,
    Score(f64),
}

impl Fitness {
    pub fn score(self) -> Option<f64> {
        match self {
            Fitness::Failed => None,
            Fitness::Score(s) => Some(s),
        }
    }
}

impl Eq for Fitness {}

impl PartialOrd for Fitness {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Fitness {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use std::cmp::Ordering::*;
        match (self, other) {
            (Fitness::Failed, Fitness::Failed) => Equal,
            (Fitness::Failed, _) => Less,
            (_, Fitness::Failed) => Greater,
            (Fitness::Score(a), Fitness::Score(b)) => a.total_cmp(b),
        }
    }
}

impl fmt::Display for Fitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fitness::Failed => write!(f, "failed"),
            Fitness::Score(s) => write!(f, "{s:.6}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: PipelineTree,
    pub fitness: Fitness,
    pub complexity: usize,
}

impl Individual {
    pub fn new(genome: PipelineTree, fitness: Fitness) -> Self {
        let complexity = genome.complexity();
        Individual {
            genome,
            fitness,
            complexity,
        }
    }
}
