//! Dataset-to-dataset pipeline operators.
//!
//! Classifier operators fit on Train rows only, predict every row, write the
//! predictions to the guess column and append them as a synthetic feature
//! `SynF_<id>`. The pair selector keeps the features of the best-scoring
//! two-feature decision trees. The combiner merges two branches by feature
//! name. No operator alters labels or the train/test partition.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::learners::{majority, DecisionTree, ForestParams, RandomForest, Sample, DEFAULT_MAX_DEPTH};

/// Depth limit for the two-feature trees that score candidate pairs. Deep
/// enough that a pair of 0/1/2 genotypes is split into all nine cells.
pub const PAIR_TREE_MAX_DEPTH: u32 = DEFAULT_MAX_DEPTH;

pub const SYNTHETIC_PREFIX: &str = "SynF_";

/// Issues synthetic feature names, unique within one pipeline evaluation.
#[derive(Debug, Clone)]
pub struct SyntheticFeatureCounter {
    next_id: usize,
}

impl Default for SyntheticFeatureCounter {
    fn default() -> Self {
        SyntheticFeatureCounter { next_id: 1 }
    }
}

impl SyntheticFeatureCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Next `SynF_<id>` not already used as a column of `ds`.
    pub fn next_name(&mut self, ds: &Dataset) -> String {
        loop {
            let name = format!("{SYNTHETIC_PREFIX}{}", self.next_id);
            self.next_id += 1;
            if ds.feature_index(&name).is_none() {
                return name;
            }
        }
    }
}

/// A model fitted inside a classifier operator.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Tree(DecisionTree),
    Forest(RandomForest),
}

impl FittedModel {
    pub fn gini_importance(&self) -> Vec<(String, f64)> {
        match self {
            FittedModel::Tree(t) => t.gini_importance(),
            FittedModel::Forest(f) => f.gini_importance(),
        }
    }

    pub fn predict(&self, ds: &Dataset) -> Result<Vec<u8>> {
        match self {
            FittedModel::Tree(t) => t.predict(ds),
            FittedModel::Forest(f) => f.predict(ds),
        }
    }
}

fn check_classifiable(ds: &Dataset) -> Result<()> {
    if ds.n_features() == 0 {
        return Err(Error::Evaluation("classifier received a dataset with no features".into()));
    }
    if !ds.partition().contains(&Split::Train) {
        return Err(Error::Evaluation("classifier received no Train rows".into()));
    }
    Ok(())
}

fn attach_predictions(ds: &Dataset, predictions: Vec<u8>, counter: &mut SyntheticFeatureCounter) -> Result<Dataset> {
    let name = counter.next_name(ds);
    let feature = predictions.iter().map(|&p| i32::from(p)).collect();
    ds.with_guess(predictions)?.with_feature(name, feature)
}

pub(crate) fn classify_dt_fitted(
    ds: &Dataset,
    max_depth: u32,
    counter: &mut SyntheticFeatureCounter,
) -> Result<(Dataset, FittedModel)> {
    check_classifiable(ds)?;
    let tree = DecisionTree::fit(ds, None, max_depth)?;
    let out = attach_predictions(ds, tree.predict(ds)?, counter)?;
    Ok((out, FittedModel::Tree(tree)))
}

pub(crate) fn classify_rf_fitted(
    ds: &Dataset,
    n_trees: u32,
    seed: u64,
    counter: &mut SyntheticFeatureCounter,
) -> Result<(Dataset, FittedModel)> {
    check_classifiable(ds)?;
    let forest = RandomForest::fit(ds, &ForestParams::new(n_trees), seed)?;
    let out = attach_predictions(ds, forest.predict(ds)?, counter)?;
    Ok((out, FittedModel::Forest(forest)))
}

/// Decision-tree classifier operator.
pub fn classify_dt(ds: &Dataset, max_depth: u32, counter: &mut SyntheticFeatureCounter) -> Result<Dataset> {
    classify_dt_fitted(ds, max_depth, counter).map(|(d, _)| d)
}

/// Random-forest classifier operator; trees use the default depth limit.
pub fn classify_rf(ds: &Dataset, n_trees: u32, seed: u64, counter: &mut SyntheticFeatureCounter) -> Result<Dataset> {
    classify_rf_fitted(ds, n_trees, seed, counter).map(|(d, _)| d)
}

/// Per-column dense value codes over the Train rows.
struct CodedColumn {
    codes: Vec<u32>,
    values: Vec<i32>,
}

impl CodedColumn {
    fn new(col: &[i32], rows: &[usize]) -> Self {
        let mut values: Vec<i32> = rows.iter().map(|&r| col[r]).collect();
        values.sort_unstable();
        values.dedup();
        let codes = if values.len() <= 64 && i64::from(values[values.len() - 1]) - i64::from(values[0]) < 64 {
            let mut lut = [0u32; 64];
            for (c, &v) in values.iter().enumerate() {
                lut[(v - values[0]) as usize] = c as u32;
            }
            rows.iter().map(|&r| lut[(col[r] - values[0]) as usize]).collect()
        } else {
            rows.iter()
                .map(|&r| values.binary_search(&col[r]).map(|c| c as u32).unwrap_or(u32::MAX))
                .collect()
        };
        CodedColumn { codes, values }
    }

    fn cardinality(&self) -> usize {
        self.values.len()
    }
}

/// Training balanced accuracy of a depth-limited tree on features `a` and
/// `b`. The Train rows are first collapsed to one weighted sample per
/// (value_a, value_b, class) cell, which fits the identical tree far faster
/// than the raw rows.
fn score_pair(a: &CodedColumn, b: &CodedColumn, labels: &[u8]) -> f64 {
    let cb = b.cardinality();
    let mut cells: HashMap<(u32, u32), [u32; 2]> = HashMap::new();
    let mut dense: Vec<[u32; 2]> = Vec::new();
    let use_dense = a.cardinality() * cb <= 4096;
    if use_dense {
        dense = vec![[0, 0]; a.cardinality() * cb];
        for k in 0..labels.len() {
            dense[a.codes[k] as usize * cb + b.codes[k] as usize][labels[k] as usize] += 1;
        }
    } else {
        for k in 0..labels.len() {
            cells.entry((a.codes[k], b.codes[k])).or_default()[labels[k] as usize] += 1;
        }
    }
    let mut entries: Vec<((u32, u32), [u32; 2])> = if use_dense {
        dense
            .iter()
            .enumerate()
            .filter(|(_, c)| c[0] + c[1] > 0)
            .map(|(i, c)| (((i / cb) as u32, (i % cb) as u32), *c))
            .collect()
    } else {
        cells.into_iter().collect()
    };
    entries.sort_unstable_by_key(|e| e.0);

    let mut col_a = Vec::new();
    let mut col_b = Vec::new();
    let mut cell_labels = Vec::new();
    let mut samples = Vec::new();
    for ((ka, kb), counts) in &entries {
        for class in 0..2u8 {
            let w = counts[class as usize];
            if w > 0 {
                samples.push(Sample {
                    row: col_a.len() as u32,
                    weight: w,
                });
                col_a.push(a.values[*ka as usize]);
                col_b.push(b.values[*kb as usize]);
                cell_labels.push(class);
            }
        }
    }
    let names: Arc<[String]> = Arc::from(vec![String::new(), String::new()]);
    let tree = DecisionTree::grow_from(
        vec![&col_a, &col_b],
        &cell_labels,
        names,
        vec![0, 1],
        &mut samples.clone(),
        PAIR_TREE_MAX_DEPTH,
        None,
        None,
    );
    let mut total = [0u64; 2];
    let mut correct = [0u64; 2];
    for s in &samples {
        let r = s.row as usize;
        let leaf = tree.leaf_for(|f| if f == 0 { col_a[r] } else { col_b[r] });
        let l = cell_labels[r] as usize;
        total[l] += u64::from(s.weight);
        if majority(leaf.counts()) as usize == l {
            correct[l] += u64::from(s.weight);
        }
    }
    0.5 * (correct[0] as f64 / total[0] as f64 + correct[1] as f64 / total[1] as f64)
}

/// Every unordered feature pair with its training balanced accuracy, best
/// first; ties keep the lexicographically smaller pair first.
pub fn rank_pairs(ds: &Dataset) -> Result<Vec<((usize, usize), f64)>> {
    let f = ds.n_features();
    if f < 2 {
        return Err(Error::Evaluation(format!("pair selection needs at least 2 features, got {f}")));
    }
    let train = ds.train_rows();
    let labels: Vec<u8> = train.iter().map(|&r| ds.labels()[r]).collect();
    if !(labels.contains(&0) && labels.contains(&1)) {
        return Err(Error::Evaluation("pair selection needs both classes among Train rows".into()));
    }
    let coded: Vec<CodedColumn> = (0..f).map(|j| CodedColumn::new(ds.column(j), &train)).collect();
    let mut scored: Vec<((usize, usize), f64)> = (0..f)
        .into_par_iter()
        .flat_map_iter(|a| {
            let coded = &coded;
            let labels = &labels;
            (a + 1..f).map(move |b| ((a, b), score_pair(&coded[a], &coded[b], labels)))
        })
        .collect();
    scored.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    Ok(scored)
}

/// Keeps the union of the features in the `n_pairs` best-ranked pairs, in
/// their original column order. Guess, labels and partition pass through.
pub fn select_pairs(ds: &Dataset, n_pairs: u32) -> Result<Dataset> {
    if n_pairs < 1 {
        return Err(Error::Evaluation("n_pairs must be at least 1".into()));
    }
    let ranked = rank_pairs(ds)?;
    let mut keep = vec![false; ds.n_features()];
    for ((a, b), _) in ranked.iter().take(n_pairs as usize) {
        keep[*a] = true;
        keep[*b] = true;
    }
    let kept: Vec<usize> = (0..ds.n_features()).filter(|&j| keep[j]).collect();
    Ok(ds.select_features(&kept))
}

/// Name-based feature union of two branches over the same records. Both
/// guess columns are dropped.
pub fn combine(a: &Dataset, b: &Dataset) -> Result<Dataset> {
    if !a.same_records(b) {
        return Err(Error::Evaluation(
            "combined datasets differ in rows, labels or partition".into(),
        ));
    }
    Ok(a.union_features(b))
}
