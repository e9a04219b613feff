//! Step-by-step replay of a pipeline: the Test accuracy after every
//! classifier and the top feature importances of the model fitted there.

use std::io::Write;

use crate::dataset::Dataset;
use crate::error::Result;
use crate::pipeline::{evaluate_traced, Fitness, Node, NodeKind, PipelineTree};

pub const TOP_FEATURES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// 1-based position in execution order.
    pub step: usize,
    /// Child indices from the root, dot-separated; `root` for the root.
    pub path: String,
    pub operator: NodeKind,
    /// The subtree ending at this classifier.
    pub pipeline: String,
    pub test_accuracy: Option<f64>,
    /// Highest Gini importances, most important first.
    pub top_features: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub steps: Vec<StepReport>,
    pub fitness: Fitness,
}

fn subtree<'a>(root: &'a Node, path: &[usize]) -> &'a Node {
    path.iter().fold(root, |node, &i| node.children()[i])
}

/// Importances sorted high to low (ties keep column order), truncated to
/// `n`.
pub fn top_importances(mut importances: Vec<(String, f64)>, n: usize) -> Vec<(String, f64)> {
    importances.sort_by(|a, b| b.1.total_cmp(&a.1));
    importances.truncate(n);
    importances
}

/// Replays `p` on a split dataset. Steps after a failing operator are
/// absent and the fitness is [`Fitness::Failed`].
pub fn pipeline_report(p: &PipelineTree, ds: &Dataset, eval_seed: u64) -> PipelineReport {
    let trace = evaluate_traced(p.root(), ds, eval_seed);
    let steps = trace
        .steps
        .into_iter()
        .enumerate()
        .map(|(i, s)| StepReport {
            step: i + 1,
            path: if s.path.is_empty() {
                "root".into()
            } else {
                s.path.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(".")
            },
            operator: s.kind,
            pipeline: subtree(p.root(), &s.path).to_string(),
            test_accuracy: s.test_accuracy,
            top_features: top_importances(s.model.gini_importance(), TOP_FEATURES),
        })
        .collect();
    PipelineReport {
        steps,
        fitness: trace.fitness,
    }
}

impl PipelineReport {
    pub fn write_accuracy_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "step,path,operator,test_accuracy,pipeline")?;
        for s in &self.steps {
            writeln!(
                out,
                "{},{},{},{},\"{}\"",
                s.step,
                s.path,
                s.operator.name(),
                s.test_accuracy.map(|a| format!("{a:.6}")).unwrap_or_default(),
                s.pipeline
            )?;
        }
        Ok(())
    }

    pub fn write_importance_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "step,rank,feature,importance")?;
        for s in &self.steps {
            for (rank, (name, v)) in s.top_features.iter().enumerate() {
                writeln!(out, "{},{},{},{:.6}", s.step, rank + 1, name, v)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::stratified_split;
    use crate::pipeline::{evaluate_pipeline, node_seed, parse_pipeline};
    use crate::seed::rng_from_seed;
    use rand::Rng;

    fn data() -> Dataset {
        let mut rng = rng_from_seed(12);
        let rows: Vec<Vec<i32>> = (0..300).map(|_| (0..15).map(|_| rng.gen_range(0..3)).collect()).collect();
        let labels = rows.iter().map(|r| u8::from((r[2] + r[9]) % 3 == 0)).collect();
        let names = (0..15).map(|j| format!("f{j}")).collect();
        stratified_split(&Dataset::from_rows(names, &rows, labels).unwrap(), 0.75, 1).unwrap()
    }

    #[test]
    fn single_classifier_has_one_step() {
        let ds = data();
        let p = parse_pipeline("(dt input depth=4)").unwrap();
        let r = pipeline_report(&p, &ds, 0);
        assert_eq!(r.steps.len(), 1);
        assert_eq!(r.steps[0].path, "root");
        assert_eq!(r.steps[0].top_features.len(), TOP_FEATURES);
        assert_eq!(Fitness::Score(r.steps[0].test_accuracy.unwrap()), r.fitness);
        let mut buf = Vec::new();
        r.write_accuracy_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }

    #[test]
    fn step_count_equals_classifier_count() {
        let ds = data();
        let p = parse_pipeline("(rf (dt (dt (pairs input n=3) depth=3) depth=2) trees=20)").unwrap();
        let r = pipeline_report(&p, &ds, 5);
        assert_eq!(r.steps.len(), 3);
        assert_eq!(
            r.steps.iter().map(|s| s.path.as_str()).collect::<Vec<_>>(),
            vec!["0.0", "0", "root"]
        );
        let sum: f64 = r.steps[2].top_features.iter().map(|(_, v)| v).sum();
        assert!(sum <= 1.0 + 1e-9);
    }

    #[test]
    fn truncated_pipelines_reproduce_step_accuracies() {
        let ds = data();
        let p = parse_pipeline("(dt (combine (rf (pairs input n=2) trees=15) (dt input depth=5)) depth=4)").unwrap();
        let r = pipeline_report(&p, &ds, 77);
        assert_eq!(r.steps.len(), 3);
        let trace = crate::pipeline::evaluate_traced(p.root(), &ds, 77);
        for (step, raw) in r.steps.iter().zip(&trace.steps) {
            let truncated = PipelineTree::new(subtree(p.root(), &raw.path).clone()).unwrap();
            let alone = evaluate_pipeline(&truncated, &ds, node_seed(77, &raw.path));
            assert_eq!(alone.score(), step.test_accuracy, "{}", step.pipeline);
            assert_eq!(truncated.to_string(), step.pipeline);
        }
    }

    #[test]
    fn importance_ranking_is_descending() {
        let v = top_importances(vec![("a".into(), 0.1), ("b".into(), 0.5), ("c".into(), 0.1), ("d".into(), 0.3)], 3);
        assert_eq!(
            v,
            vec![("b".to_string(), 0.5), ("d".to_string(), 0.3), ("a".to_string(), 0.1)]
        );
    }
}
