//! Evolutionary search over tree-shaped classification pipelines.
//!
//! A pipeline is a typed expression tree: copies of the input data flow up
//! through feature-pair selectors, dataset merges and decision-tree or
//! random-forest classifiers. Each classifier writes its predictions to the
//! volatile `guess` column and also appends them as a new synthetic feature.
//! Pipelines are scored by balanced accuracy of the root classifier's guess
//! on held-out rows and evolved by genetic programming with parsimony
//! pressure.
//!
//! The [`simdata`] module generates case/control SNP data whose signal lives
//! only in pairwise epistatic interactions, which is where feature-pair
//! selection and synthetic features pay off.

pub mod dataset;
pub mod error;
pub mod evolve;
pub mod grid;
pub mod learners;
pub mod operators;
pub mod pipeline;
pub mod report;
pub mod seed;
pub mod simdata;

pub use dataset::{balanced_accuracy, stratified_split, Dataset, Split};
pub use error::{Error, Result};
pub use evolve::{GpConfig, Mode, SearchResult};
pub use learners::{DecisionTree, ForestParams, RandomForest};
pub use pipeline::{Fitness, Individual, Node, PipelineTree};
