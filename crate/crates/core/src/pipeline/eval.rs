//! Pipeline execution.
//!
//! Every node gets its own seed: the root uses the evaluation seed and child
//! `i` of a node uses `derive_seed(node_seed, i)`. A subtree therefore sees
//! the same randomness whether it runs inside a larger pipeline or on its
//! own, which is what lets reports replay any single step.

use rayon::prelude::*;

use super::{Fitness, Node, NodeKind, PipelineTree};
use crate::dataset::{balanced_accuracy_over, stratified_folds, Dataset, Split};
use crate::error::{Error, Result};
use crate::operators::{classify_dt_fitted, classify_rf_fitted, combine, select_pairs, FittedModel, SyntheticFeatureCounter};
use crate::seed::derive_seed;

/// Stream index for a forest's own randomness, far from any child index.
const FOREST_STREAM: u64 = 0xF0F0_0000;

/// Seed of the node reached by following child indices `path` from a root
/// evaluated with `eval_seed`.
pub fn node_seed(eval_seed: u64, path: &[usize]) -> u64 {
    path.iter().fold(eval_seed, |s, &i| derive_seed(s, i as u64))
}

/// One classifier step, recorded when it finishes.
#[derive(Debug, Clone)]
pub struct StepRecord {
    /// Child indices from the root to this node.
    pub path: Vec<usize>,
    pub kind: NodeKind,
    pub node_seed: u64,
    /// Balanced accuracy of this step's guess over Test rows, if defined.
    pub test_accuracy: Option<f64>,
    pub model: FittedModel,
}

#[derive(Debug, Clone)]
pub struct Trace {
    /// Classifier steps in execution order; the root's step is last.
    pub steps: Vec<StepRecord>,
    pub fitness: Fitness,
}

struct Run<'a> {
    input: &'a Dataset,
    counter: SyntheticFeatureCounter,
    steps: Option<Vec<StepRecord>>,
}

impl Run<'_> {
    fn node(&mut self, node: &Node, seed: u64, path: &mut Vec<usize>) -> Result<Dataset> {
        match node {
            Node::Input => Ok(self.input.clone()),
            Node::SelectPairs { child, n_pairs } => {
                let ds = self.child(child, seed, 0, path)?;
                select_pairs(&ds, *n_pairs)
            }
            Node::Combine { left, right } => {
                let a = self.child(left, seed, 0, path)?;
                let b = self.child(right, seed, 1, path)?;
                combine(&a, &b)
            }
            Node::ClassifyDt { child, max_depth } => {
                let ds = self.child(child, seed, 0, path)?;
                let (out, model) = classify_dt_fitted(&ds, *max_depth, &mut self.counter)?;
                self.record(NodeKind::ClassifyDt, seed, path, &out, model);
                Ok(out)
            }
            Node::ClassifyRf { child, n_trees } => {
                let ds = self.child(child, seed, 0, path)?;
                let fit_seed = derive_seed(seed, FOREST_STREAM);
                let (out, model) = classify_rf_fitted(&ds, *n_trees, fit_seed, &mut self.counter)?;
                self.record(NodeKind::ClassifyRf, seed, path, &out, model);
                Ok(out)
            }
        }
    }

    fn child(&mut self, node: &Node, seed: u64, index: usize, path: &mut Vec<usize>) -> Result<Dataset> {
        path.push(index);
        let out = self.node(node, derive_seed(seed, index as u64), path);
        path.pop();
        out
    }

    fn record(&mut self, kind: NodeKind, seed: u64, path: &[usize], out: &Dataset, model: FittedModel) {
        if let Some(steps) = self.steps.as_mut() {
            steps.push(StepRecord {
                path: path.to_vec(),
                kind,
                node_seed: seed,
                test_accuracy: test_accuracy(out).ok(),
                model,
            });
        }
    }
}

fn test_accuracy(ds: &Dataset) -> Result<f64> {
    let guess = ds
        .guess()
        .ok_or_else(|| Error::Evaluation("pipeline output carries no guess column".into()))?;
    balanced_accuracy_over(ds.labels(), guess, ds.test_rows())
}

fn run_node(root: &Node, ds: &Dataset, seed: u64, traced: bool) -> (Result<f64>, Vec<StepRecord>) {
    let mut run = Run {
        input: ds,
        counter: SyntheticFeatureCounter::new(),
        steps: traced.then(Vec::new),
    };
    let score = run.node(root, seed, &mut Vec::new()).and_then(|out| test_accuracy(&out));
    (score, run.steps.unwrap_or_default())
}

fn to_fitness(score: Result<f64>) -> Fitness {
    match score {
        Ok(s) => Fitness::Score(s),
        Err(_) => Fitness::Failed,
    }
}

/// Runs the pipeline on `ds` (which must carry a Train/Test partition) and
/// scores the root guess on Test rows. Any operator failure yields
/// [`Fitness::Failed`].
pub fn evaluate_pipeline(p: &PipelineTree, ds: &Dataset, eval_seed: u64) -> Fitness {
    to_fitness(run_node(p.root(), ds, eval_seed, false).0)
}

/// Like [`evaluate_pipeline`] but keeps every classifier's fitted model and
/// Test accuracy. `root` may be any subtree; pass its [`node_seed`] to
/// reproduce what it computed inside the full pipeline.
pub fn evaluate_traced(root: &Node, ds: &Dataset, seed: u64) -> Trace {
    let (score, steps) = run_node(root, ds, seed, true);
    Trace {
        steps,
        fitness: to_fitness(score),
    }
}

/// Stratified k-fold scores: fold `f` is the Test set of run `f`. Folds are
/// assigned from `derive_seed(seed, 0)`; every run uses evaluation seed
/// `derive_seed(seed, 1)`.
pub fn crossval_pipeline(p: &PipelineTree, ds: &Dataset, k: usize, seed: u64) -> Result<Vec<Fitness>> {
    let folds = stratified_folds(ds.labels(), k, derive_seed(seed, 0))?;
    let eval_seed = derive_seed(seed, 1);
    (0..k)
        .into_par_iter()
        .map(|f| {
            let partition = folds
                .iter()
                .map(|&g| if g == f { Split::Test } else { Split::Train })
                .collect();
            let split = ds.with_partition(partition)?;
            Ok(evaluate_pipeline(p, &split, eval_seed))
        })
        .collect()
}
