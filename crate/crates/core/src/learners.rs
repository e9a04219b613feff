//! Binary CART decision trees and bagged random forests.
//!
//! Splits have the form `value <= threshold` (left) / `value > threshold`
//! (right). Candidate thresholds are every distinct value present at the node
//! except the largest, so genotype columns coded 0/1/2 are cut at 0 and 1.
//! The split minimizing the weighted Gini impurity of the children wins; ties
//! go to the lowest feature index, then the lowest threshold.
//!
//! Training samples carry integer weights. A plain fit uses weight 1 per
//! Train row; a forest tree uses bootstrap multiplicities, which is exactly
//! equivalent to fitting on the resampled rows.

use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed};

/// Depth used when a caller does not choose one.
pub const DEFAULT_MAX_DEPTH: u32 = 10;

/// Histogram counting is used when a feature spans at most this many values.
const DENSE_RANGE_LIMIT: i64 = 4096;

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        counts: [u64; 2],
    },
    Split {
        feature: usize,
        threshold: i32,
        counts: [u64; 2],
        left: usize,
        right: usize,
    },
}

impl TreeNode {
    pub fn counts(&self) -> [u64; 2] {
        match self {
            TreeNode::Leaf { counts } | TreeNode::Split { counts, .. } => *counts,
        }
    }
}

/// Majority label of a count pair; a tie predicts 0.
pub fn majority(counts: [u64; 2]) -> u8 {
    u8::from(counts[1] > counts[0])
}

/// Gini impurity `1 - p0^2 - p1^2`.
pub fn gini(counts: [u64; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p0 = counts[0] as f64 / n;
    let p1 = counts[1] as f64 / n;
    1.0 - p0 * p0 - p1 * p1
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<TreeNode>,
    feature_names: Arc<[String]>,
    max_depth: u32,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Sample {
    pub row: u32,
    pub weight: u32,
}

struct Grower<'a> {
    columns: Vec<&'a [i32]>,
    labels: &'a [u8],
    max_depth: u32,
    candidates: Vec<usize>,
    per_split: Option<usize>,
    rng: Option<ChaCha8Rng>,
    ranges: Vec<(i32, i32)>,
    nodes: Vec<TreeNode>,
    hist: Vec<[u64; 2]>,
    sorted: Vec<(i32, u8, u32)>,
}

struct BestSplit {
    feature: usize,
    threshold: i32,
    score: f64,
}

fn child_score(l: [u64; 2], r: [u64; 2]) -> f64 {
    // Weighted child Gini is 1 - score / n, so maximizing this minimizes it.
    let nl = (l[0] + l[1]) as f64;
    let nr = (r[0] + r[1]) as f64;
    let sq = |c: [u64; 2]| (c[0] as f64).powi(2) + (c[1] as f64).powi(2);
    sq(l) / nl + sq(r) / nr
}

impl<'a> Grower<'a> {
    fn new(
        columns: Vec<&'a [i32]>,
        labels: &'a [u8],
        candidates: Vec<usize>,
        samples: &[Sample],
        max_depth: u32,
        per_split: Option<usize>,
        rng: Option<ChaCha8Rng>,
    ) -> Self {
        let mut ranges = vec![(0, 0); columns.len()];
        for &f in &candidates {
            let col = columns[f];
            let (mut lo, mut hi) = (i32::MAX, i32::MIN);
            for s in samples {
                let v = col[s.row as usize];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            ranges[f] = (lo, hi);
        }
        Grower {
            columns,
            labels,
            max_depth,
            candidates,
            per_split,
            rng,
            ranges,
            nodes: Vec::new(),
            hist: Vec::new(),
            sorted: Vec::new(),
        }
    }

    fn counts(&self, samples: &[Sample]) -> [u64; 2] {
        let mut c = [0u64; 2];
        for s in samples {
            c[self.labels[s.row as usize] as usize] += u64::from(s.weight);
        }
        c
    }

    fn grow(&mut self, samples: &mut [Sample], depth: u32) -> usize {
        let counts = self.counts(samples);
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { counts });
        if counts[0] == 0 || counts[1] == 0 || depth >= self.max_depth {
            return id;
        }
        let Some(best) = self.best_split(samples) else {
            return id;
        };
        let col = self.columns[best.feature];
        let mut split_at = 0;
        for i in 0..samples.len() {
            if col[samples[i].row as usize] <= best.threshold {
                samples.swap(i, split_at);
                split_at += 1;
            }
        }
        let (left_samples, right_samples) = samples.split_at_mut(split_at);
        let left = self.grow(left_samples, depth + 1);
        let right = self.grow(right_samples, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            counts,
            left,
            right,
        };
        id
    }

    fn node_features(&mut self) -> Vec<usize> {
        match (self.per_split, self.rng.as_mut()) {
            (Some(m), Some(rng)) if m < self.candidates.len() => {
                let mut picked: Vec<usize> = index::sample(rng, self.candidates.len(), m)
                    .into_iter()
                    .map(|i| self.candidates[i])
                    .collect();
                picked.sort_unstable();
                picked
            }
            _ => self.candidates.clone(),
        }
    }

    fn best_split(&mut self, samples: &[Sample]) -> Option<BestSplit> {
        let total = self.counts(samples);
        let mut best: Option<BestSplit> = None;
        for f in self.node_features() {
            let (lo, hi) = self.ranges[f];
            if lo == hi {
                continue;
            }
            let found = if i64::from(hi) - i64::from(lo) < DENSE_RANGE_LIMIT {
                self.scan_dense(f, lo, hi, samples, total)
            } else {
                self.scan_sorted(f, samples, total)
            };
            if let Some((threshold, score)) = found {
                let better = match &best {
                    None => true,
                    Some(b) => score > b.score + 1e-12 * b.score.abs().max(1.0),
                };
                if better {
                    best = Some(BestSplit { feature: f, threshold, score });
                }
            }
        }
        best
    }

    fn scan_dense(&mut self, f: usize, lo: i32, hi: i32, samples: &[Sample], total: [u64; 2]) -> Option<(i32, f64)> {
        let width = (i64::from(hi) - i64::from(lo) + 1) as usize;
        self.hist.clear();
        self.hist.resize(width, [0, 0]);
        let col = self.columns[f];
        for s in samples {
            let r = s.row as usize;
            self.hist[(col[r] - lo) as usize][self.labels[r] as usize] += u64::from(s.weight);
        }
        let bins = self
            .hist
            .iter()
            .enumerate()
            .filter(|(_, c)| c[0] + c[1] > 0)
            .map(|(i, c)| (lo + i as i32, *c));
        scan_bins(bins, total)
    }

    fn scan_sorted(&mut self, f: usize, samples: &[Sample], total: [u64; 2]) -> Option<(i32, f64)> {
        let col = self.columns[f];
        self.sorted.clear();
        self.sorted
            .extend(samples.iter().map(|s| (col[s.row as usize], self.labels[s.row as usize], s.weight)));
        self.sorted.sort_unstable_by_key(|t| t.0);
        let mut bins: Vec<(i32, [u64; 2])> = Vec::new();
        for &(v, l, w) in &self.sorted {
            match bins.last_mut() {
                Some((bv, c)) if *bv == v => c[l as usize] += u64::from(w),
                _ => {
                    let mut c = [0, 0];
                    c[l as usize] = u64::from(w);
                    bins.push((v, c));
                }
            }
        }
        scan_bins(bins.into_iter(), total)
    }
}

/// Best threshold over value-ordered bins. The last bin is never a cut.
fn scan_bins(bins: impl Iterator<Item = (i32, [u64; 2])>, total: [u64; 2]) -> Option<(i32, f64)> {
    let mut left = [0u64; 2];
    let mut best: Option<(i32, f64)> = None;
    for (value, c) in bins {
        left[0] += c[0];
        left[1] += c[1];
        let right = [total[0] - left[0], total[1] - left[1]];
        if right[0] + right[1] == 0 {
            break;
        }
        let score = child_score(left, right);
        if best.is_none_or(|(_, b)| score > b + 1e-12 * b.abs().max(1.0)) {
            best = Some((value, score));
        }
    }
    best
}

fn train_samples(ds: &Dataset) -> Result<Vec<Sample>> {
    let samples: Vec<Sample> = ds
        .partition()
        .iter()
        .enumerate()
        .filter(|(_, s)| **s == Split::Train)
        .map(|(i, _)| Sample { row: i as u32, weight: 1 })
        .collect();
    if samples.is_empty() {
        return Err(Error::Contract("no Train rows to fit on".into()));
    }
    Ok(samples)
}

fn columns_of(ds: &Dataset) -> Vec<&[i32]> {
    (0..ds.n_features()).map(|j| ds.column(j)).collect()
}

/// Maps each model feature index to a column of `ds`, by name. Only features
/// the model actually splits on must be present.
fn resolve_features(names: &[String], used: &[bool], ds: &Dataset) -> Result<Vec<usize>> {
    let ds_names = ds.feature_names();
    names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            if !used[j] {
                return Ok(usize::MAX);
            }
            if ds_names.get(j) == Some(name) {
                return Ok(j);
            }
            ds.feature_index(name)
                .ok_or_else(|| Error::Contract(format!("feature `{name}` missing from prediction data")))
        })
        .collect()
}

impl DecisionTree {
    /// Fits on the Train rows of `ds`. With `feature_subset`, only those
    /// column indices are considered for splits.
    pub fn fit(ds: &Dataset, feature_subset: Option<&[usize]>, max_depth: u32) -> Result<Self> {
        if max_depth < 1 {
            return Err(Error::Contract("max_depth must be at least 1".into()));
        }
        let mut samples = train_samples(ds)?;
        let candidates = match feature_subset {
            Some(s) => {
                if let Some(&bad) = s.iter().find(|&&j| j >= ds.n_features()) {
                    return Err(Error::Contract(format!("feature index {bad} out of range")));
                }
                let mut s = s.to_vec();
                s.sort_unstable();
                s.dedup();
                s
            }
            None => (0..ds.n_features()).collect(),
        };
        Ok(Self::grow_from(
            columns_of(ds),
            ds.labels(),
            ds.feature_names().into(),
            candidates,
            &mut samples,
            max_depth,
            None,
            None,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn grow_from(
        columns: Vec<&[i32]>,
        labels: &[u8],
        feature_names: Arc<[String]>,
        candidates: Vec<usize>,
        samples: &mut [Sample],
        max_depth: u32,
        per_split: Option<usize>,
        rng: Option<ChaCha8Rng>,
    ) -> Self {
        let mut grower = Grower::new(columns, labels, candidates, samples, max_depth, per_split, rng);
        grower.grow(samples, 0);
        DecisionTree {
            nodes: grower.nodes,
            feature_names,
            max_depth,
        }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    /// Number of split levels on the longest root-to-leaf path.
    pub fn depth(&self) -> u32 {
        fn walk(nodes: &[TreeNode], id: usize) -> u32 {
            match &nodes[id] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    fn used_features(&self) -> Vec<bool> {
        let mut used = vec![false; self.feature_names.len()];
        for n in &self.nodes {
            if let TreeNode::Split { feature, .. } = n {
                used[*feature] = true;
            }
        }
        used
    }

    pub(crate) fn leaf_for(&self, value_of: impl Fn(usize) -> i32) -> &TreeNode {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                leaf @ TreeNode::Leaf { .. } => return leaf,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => id = if value_of(*feature) <= *threshold { *left } else { *right },
            }
        }
    }

    fn predict_mapped(&self, ds: &Dataset, map: &[usize]) -> Vec<u8> {
        (0..ds.n_rows())
            .map(|i| majority(self.leaf_for(|f| ds.column(map[f])[i]).counts()))
            .collect()
    }

    /// Leaf-majority label for every row of `ds`, Train and Test alike.
    pub fn predict(&self, ds: &Dataset) -> Result<Vec<u8>> {
        let map = resolve_features(&self.feature_names, &self.used_features(), ds)?;
        Ok(self.predict_mapped(ds, &map))
    }

    /// Unnormalized impurity decrease per feature, each split weighted by the
    /// fraction of training weight reaching it.
    fn raw_importance(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.feature_names.len()];
        let root = self.nodes[0].counts();
        let n_root = (root[0] + root[1]) as f64;
        for node in &self.nodes {
            if let TreeNode::Split {
                feature,
                counts,
                left,
                right,
                ..
            } = node
            {
                let weighted = |c: [u64; 2]| (c[0] + c[1]) as f64 * gini(c);
                let decrease = weighted(*counts)
                    - weighted(self.nodes[*left].counts())
                    - weighted(self.nodes[*right].counts());
                imp[*feature] += decrease / n_root;
            }
        }
        imp
    }

    /// Gini importance per feature, in feature order, normalized to sum to 1
    /// (all zeros when the tree never splits).
    pub fn gini_importance(&self) -> Vec<(String, f64)> {
        let imp = normalized(self.raw_importance());
        self.feature_names.iter().cloned().zip(imp).collect()
    }
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxFeatures {
    /// `ceil(sqrt(F))` candidate features per split.
    Sqrt,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestParams {
    pub n_trees: u32,
    pub max_depth: u32,
    pub max_features: MaxFeatures,
}

impl ForestParams {
    pub fn new(n_trees: u32) -> Self {
        ForestParams {
            n_trees,
            max_depth: DEFAULT_MAX_DEPTH,
            max_features: MaxFeatures::Sqrt,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    feature_names: Arc<[String]>,
}

/// Bootstrap resample (with replacement) of `rows`, same size, for the forest
/// tree whose seed is `tree_seed`.
pub fn bootstrap_sample(rows: &[usize], tree_seed: u64) -> Vec<usize> {
    let mut rng = rng_from_seed(tree_seed);
    (0..rows.len()).map(|_| rows[rng.gen_range(0..rows.len())]).collect()
}

/// Seed of tree `t` in a forest fitted with `seed`.
pub fn forest_tree_seed(seed: u64, t: u32) -> u64 {
    derive_seed(seed, u64::from(t))
}

impl RandomForest {
    /// Fits `n_trees` trees on bootstrap resamples of the Train rows. Trees
    /// are grown in parallel; each owns a pre-assigned seed so the result is
    /// identical to a sequential fit.
    pub fn fit(ds: &Dataset, params: &ForestParams, seed: u64) -> Result<Self> {
        if params.n_trees < 1 {
            return Err(Error::Contract("a forest needs at least one tree".into()));
        }
        if params.max_depth < 1 {
            return Err(Error::Contract("max_depth must be at least 1".into()));
        }
        let train: Vec<usize> = train_samples(ds)?.iter().map(|s| s.row as usize).collect();
        let f = ds.n_features();
        let per_split = match params.max_features {
            MaxFeatures::Sqrt => Some((f as f64).sqrt().ceil() as usize),
            MaxFeatures::All => None,
        };
        let names: Arc<[String]> = ds.feature_names().into();
        let columns = columns_of(ds);
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let tree_seed = forest_tree_seed(seed, t);
                let mut weights = vec![0u32; ds.n_rows()];
                for r in bootstrap_sample(&train, tree_seed) {
                    weights[r] += 1;
                }
                let mut samples: Vec<Sample> = weights
                    .iter()
                    .enumerate()
                    .filter(|(_, &w)| w > 0)
                    .map(|(r, &w)| Sample { row: r as u32, weight: w })
                    .collect();
                DecisionTree::grow_from(
                    columns.clone(),
                    ds.labels(),
                    Arc::clone(&names),
                    (0..f).collect(),
                    &mut samples,
                    params.max_depth,
                    per_split,
                    Some(rng_from_seed(derive_seed(tree_seed, 1))),
                )
            })
            .collect();
        Ok(RandomForest {
            trees,
            feature_names: names,
        })
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Majority vote of the trees; an even split votes 0.
    pub fn predict(&self, ds: &Dataset) -> Result<Vec<u8>> {
        let mut used = vec![false; self.feature_names.len()];
        for t in &self.trees {
            for (u, tu) in used.iter_mut().zip(t.used_features()) {
                *u |= tu;
            }
        }
        let map = resolve_features(&self.feature_names, &used, ds)?;
        let n_trees = self.trees.len();
        let votes = self
            .trees
            .par_iter()
            .map(|t| t.predict_mapped(ds, &map))
            .fold(
                || vec![0usize; ds.n_rows()],
                |mut acc, p| {
                    acc.iter_mut().zip(p).for_each(|(a, v)| *a += v as usize);
                    acc
                },
            )
            .reduce(
                || vec![0usize; ds.n_rows()],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        Ok(votes.into_iter().map(|v| u8::from(2 * v > n_trees)).collect())
    }

    /// Mean of per-tree normalized importances, renormalized.
    pub fn gini_importance(&self) -> Vec<(String, f64)> {
        let mut acc = vec![0.0; self.feature_names.len()];
        for t in &self.trees {
            for (a, v) in acc.iter_mut().zip(normalized(t.raw_importance())) {
                *a += v;
            }
        }
        let imp = normalized(acc);
        self.feature_names.iter().cloned().zip(imp).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::stratified_split;
    use proptest::prelude::*;

    fn ds(rows: &[Vec<i32>], labels: &[u8]) -> Dataset {
        let names = (0..rows[0].len()).map(|j| format!("f{j}")).collect();
        Dataset::from_rows(names, rows, labels.to_vec()).unwrap()
    }

    fn accuracy(pred: &[u8], labels: &[u8]) -> f64 {
        pred.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64
    }

    fn xor_data() -> Dataset {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for a in 0..2 {
            for b in 0..2 {
                for _ in 0..5 {
                    rows.push(vec![a, b]);
                    labels.push((a ^ b) as u8);
                }
            }
        }
        ds(&rows, &labels)
    }

    #[test]
    fn gini_reference_values() {
        assert_eq!(gini([7, 0]), 0.0);
        assert_eq!(gini([3, 3]), 0.5);
    }

    #[test]
    fn separable_feature_gives_depth_one_tree() {
        let d = ds(&[vec![0, 2], vec![0, 1], vec![1, 2], vec![1, 0]], &[0, 0, 1, 1]);
        let t = DecisionTree::fit(&d, None, 5).unwrap();
        assert_eq!(t.depth(), 1);
        assert!(matches!(t.root(), TreeNode::Split { feature: 0, threshold: 0, .. }));
        assert_eq!(accuracy(&t.predict(&d).unwrap(), d.labels()), 1.0);
    }

    #[test]
    fn pure_root_is_single_leaf() {
        // a dataset always holds both classes, so make the Train rows pure
        let full = ds(&[vec![0], vec![1], vec![2], vec![2]], &[1, 1, 1, 0]);
        let only_cases = full
            .with_partition(vec![Split::Train, Split::Train, Split::Train, Split::Test])
            .unwrap();
        let t = DecisionTree::fit(&only_cases, None, 4).unwrap();
        assert_eq!(t.nodes().len(), 1);
        assert_eq!(t.predict(&full).unwrap(), vec![1, 1, 1, 1]);
        assert!(t.gini_importance().iter().all(|(_, v)| *v == 0.0));
    }

    #[test]
    fn xor_needs_depth_two() {
        let d = xor_data();
        let deep = DecisionTree::fit(&d, None, 2).unwrap();
        assert_eq!(accuracy(&deep.predict(&d).unwrap(), d.labels()), 1.0);
        // every depth-1 cut of the balanced XOR leaves each side 50/50, and
        // each leaf ties to class 0
        let shallow = DecisionTree::fit(&d, None, 1).unwrap();
        assert_eq!(accuracy(&shallow.predict(&d).unwrap(), d.labels()), 0.5);
    }

    #[test]
    fn depth_one_hand_trace() {
        // f0 <= 0 -> rows 0,1,2 (labels 0,0,1 -> 0); f0 > 0 -> rows 3,4 (1,1 -> 1)
        let d = ds(&[vec![0], vec![0], vec![0], vec![1], vec![2]], &[0, 0, 1, 1, 1]);
        let t = DecisionTree::fit(&d, None, 1).unwrap();
        assert!(matches!(t.root(), TreeNode::Split { feature: 0, threshold: 0, .. }));
        assert_eq!(t.predict(&d).unwrap(), vec![0, 0, 0, 1, 1]);
        let imp = t.gini_importance();
        assert_eq!(imp[0].1, 1.0);
    }

    #[test]
    fn fit_uses_only_train_rows() {
        let d = ds(&[vec![0], vec![1], vec![0], vec![1]], &[0, 1, 1, 0]);
        let d = d
            .with_partition(vec![Split::Train, Split::Train, Split::Test, Split::Test])
            .unwrap();
        let t = DecisionTree::fit(&d, None, 3).unwrap();
        assert_eq!(t.predict(&d).unwrap(), vec![0, 1, 0, 1]);
        let none = d.with_partition(vec![Split::Test; 4]).unwrap();
        assert!(matches!(DecisionTree::fit(&none, None, 3), Err(Error::Contract(_))));
    }

    #[test]
    fn predict_resolves_features_by_name() {
        let d = ds(&[vec![0, 5], vec![1, 5], vec![0, 6], vec![1, 6]], &[0, 1, 0, 1]);
        let t = DecisionTree::fit(&d, None, 2).unwrap();
        let reordered = d.select_features(&[1, 0]);
        assert_eq!(t.predict(&reordered).unwrap(), t.predict(&d).unwrap());
        let missing = d.select_features(&[1]);
        assert!(matches!(t.predict(&missing), Err(Error::Contract(_))));
    }

    #[test]
    fn large_value_ranges_use_sorted_scan() {
        let rows: Vec<Vec<i32>> = (0..20).map(|i| vec![i * 100_000]).collect();
        let labels: Vec<u8> = (0..20).map(|i| u8::from(i >= 7)).collect();
        let d = ds(&rows, &labels);
        let t = DecisionTree::fit(&d, None, 3).unwrap();
        assert!(matches!(t.root(), TreeNode::Split { threshold: 600_000, .. }));
    }

    #[test]
    fn forest_tie_votes_zero() {
        let d = xor_data();
        let forest = RandomForest::fit(&d, &ForestParams::new(2), 5).unwrap();
        let per_tree: Vec<Vec<u8>> = forest.trees().iter().map(|t| t.predict(&d).unwrap()).collect();
        let pred = forest.predict(&d).unwrap();
        for i in 0..d.n_rows() {
            let ones = per_tree.iter().filter(|p| p[i] == 1).count();
            let expect = match ones {
                2 => 1,
                _ => 0,
            };
            assert_eq!(pred[i], expect);
        }
    }

    #[test]
    fn single_tree_forest_matches_bootstrap_refit() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            rows.push(vec![i % 3, (i / 3) % 3, (i * 7) % 3]);
            labels.push(u8::from((i % 3 + (i / 3) % 3) % 2 == 0));
        }
        let d = stratified_split(&ds(&rows, &labels), 0.75, 2).unwrap();
        let params = ForestParams {
            n_trees: 1,
            max_depth: 4,
            max_features: MaxFeatures::All,
        };
        let forest = RandomForest::fit(&d, &params, 77).unwrap();

        let boot = bootstrap_sample(&d.train_rows(), forest_tree_seed(77, 0));
        let brows: Vec<Vec<i32>> = boot.iter().map(|&r| rows[r].clone()).collect();
        let blabels: Vec<u8> = boot.iter().map(|&r| labels[r]).collect();
        let tree = DecisionTree::fit(&ds(&brows, &blabels), None, 4).unwrap();
        assert_eq!(forest.predict(&d).unwrap(), tree.predict(&d).unwrap());
    }

    #[test]
    fn forest_is_deterministic() {
        let d = xor_data();
        let a = RandomForest::fit(&d, &ForestParams::new(9), 3).unwrap();
        let b = RandomForest::fit(&d, &ForestParams::new(9), 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trees().len(), 9);
    }

    fn random_data(cells: &[(u8, u8, u8, u8)]) -> Dataset {
        let rows: Vec<Vec<i32>> = cells.iter().map(|c| vec![c.0 as i32, c.1 as i32, c.2 as i32]).collect();
        let mut labels: Vec<u8> = cells.iter().map(|c| c.3).collect();
        labels[0] = 0;
        labels[1] = 1;
        ds(&rows, &labels)
    }

    fn cell_strategy() -> impl Strategy<Value = Vec<(u8, u8, u8, u8)>> {
        proptest::collection::vec((0u8..3, 0u8..3, 0u8..3, 0u8..2), 4..60)
    }

    proptest! {
        #[test]
        fn training_accuracy_non_decreasing_in_depth(cells in cell_strategy()) {
            let d = random_data(&cells);
            let mut last = 0.0;
            for depth in 1..=6 {
                let t = DecisionTree::fit(&d, None, depth).unwrap();
                prop_assert!(t.depth() <= depth);
                let acc = accuracy(&t.predict(&d).unwrap(), d.labels());
                prop_assert!(acc + 1e-12 >= last);
                last = acc;
            }
        }

        #[test]
        fn predictions_are_row_order_equivariant(cells in cell_strategy(), shift in 1usize..50) {
            let d = random_data(&cells);
            let t = DecisionTree::fit(&d, None, 3).unwrap();
            let pred = t.predict(&d).unwrap();
            let n = d.n_rows();
            let order: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
            let rows: Vec<Vec<i32>> = order.iter().map(|&i| (0..3).map(|j| d.column(j)[i]).collect()).collect();
            let permuted = Dataset::from_rows(d.feature_names().to_vec(), &rows, order.iter().map(|&i| d.labels()[i]).collect());
            if let Ok(p) = permuted {
                let ppred = t.predict(&p).unwrap();
                for (k, &i) in order.iter().enumerate() {
                    prop_assert_eq!(ppred[k], pred[i]);
                }
            }
        }

        #[test]
        fn importances_sum_to_one(cells in cell_strategy(), depth in 1u32..6) {
            let d = random_data(&cells);
            let t = DecisionTree::fit(&d, None, depth).unwrap();
            let total: f64 = t.gini_importance().iter().map(|(_, v)| v).sum();
            if t.raw_importance().iter().sum::<f64>() > 0.0 {
                prop_assert!((total - 1.0).abs() < 1e-9);
            } else {
                prop_assert!(total == 0.0);
            }
        }
    }
}
