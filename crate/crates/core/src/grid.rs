//! Experiment grid: simulated datasets over heritability × sample size ×
//! replicate, each scored by every requested search mode.
//!
//! All modes in one (cell, replicate) see the same dataset, the same
//! Train/Test split and the same evaluation seed, so comparisons between
//! modes are paired.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;

use crate::dataset::{stratified_split, Dataset};
use crate::error::{Error, Result};
use crate::evolve::{run, GpConfig, Mode};
use crate::pipeline::{crossval_pipeline, evaluate_pipeline, parse_pipeline, Fitness, PipelineTree};
use crate::seed::{derive_seed, RunSeeds};
use crate::simdata::{simulate, SimulationParams, DEFAULT_NOISE_MAF_RANGE, DEFAULT_PREVALENCE};

/// The fixed random-forest baseline.
pub const RF_BASELINE: &str = "(rf input trees=100)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GridMode {
    Gp,
    RandomSearch,
    ModelsOnly,
    RfBaseline,
}

impl GridMode {
    pub const ALL: [GridMode; 4] = [GridMode::Gp, GridMode::RandomSearch, GridMode::ModelsOnly, GridMode::RfBaseline];

    pub fn name(self) -> &'static str {
        match self {
            GridMode::Gp => "gp",
            GridMode::RandomSearch => "random-search",
            GridMode::ModelsOnly => "models-only",
            GridMode::RfBaseline => "rf-baseline",
        }
    }

    fn search_mode(self) -> Option<Mode> {
        match self {
            GridMode::Gp => Some(Mode::Gp),
            GridMode::RandomSearch => Some(Mode::RandomSearch),
            GridMode::ModelsOnly => Some(Mode::ModelsOnly),
            GridMode::RfBaseline => None,
        }
    }
}

impl fmt::Display for GridMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GridMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gp" => Ok(GridMode::Gp),
            "random" | "random-search" => Ok(GridMode::RandomSearch),
            "models-only" => Ok(GridMode::ModelsOnly),
            "rf" | "rf-baseline" => Ok(GridMode::RfBaseline),
            other => Err(Error::Contract(format!(
                "unknown grid mode `{other}`; expected gp, random-search, models-only or rf-baseline"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentGrid {
    pub heritabilities: Vec<f64>,
    pub sample_sizes: Vec<usize>,
    pub replicates: usize,
    pub modes: Vec<GridMode>,
    pub maf: f64,
    pub prevalence: f64,
    pub n_snps: usize,
    pub seed: u64,
    pub population_size: usize,
    pub generations: usize,
    pub train_fraction: f64,
    /// Folds for re-scoring each best pipeline; 0 disables it.
    pub cv_folds: usize,
    pub jobs: usize,
    /// Where simulated datasets are cached; regenerated when absent.
    pub data_dir: Option<PathBuf>,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        ExperimentGrid {
            heritabilities: vec![0.1, 0.2, 0.4],
            sample_sizes: vec![200, 400, 800, 1600],
            replicates: 30,
            modes: GridMode::ALL.to_vec(),
            maf: 0.2,
            prevalence: DEFAULT_PREVALENCE,
            n_snps: 100,
            seed: 0,
            population_size: 100,
            generations: 100,
            train_fraction: 0.75,
            cv_folds: 10,
            jobs: 1,
            data_dir: None,
        }
    }
}

/// One (cell, replicate, mode) outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub h2: f64,
    pub samples: usize,
    pub replicate: usize,
    pub mode: GridMode,
    pub dataset_seed: u64,
    /// `ok`, or the error that stopped this row.
    pub status: String,
    /// Fitness of the returned pipeline on the Test rows.
    pub holdout: Option<f64>,
    pub cv_scores: Vec<Fitness>,
    pub complexity: Option<usize>,
    pub evaluations: usize,
    pub pipeline: String,
}

impl GridRow {
    pub fn cv_mean(&self) -> Option<f64> {
        let s: Vec<f64> = self.cv_scores.iter().filter_map(|f| f.score()).collect();
        (!s.is_empty() && s.len() == self.cv_scores.len()).then(|| s.iter().sum::<f64>() / s.len() as f64)
    }
}

/// Median of a non-empty sample; the mean of the middle pair for even
/// sizes.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// Dataset seed for a grid cell and replicate. Keyed on the parameter
/// values rather than their list positions, so a sub-grid reproduces the
/// corresponding datasets of the full grid.
pub fn dataset_seed(seed: u64, h2: f64, samples: usize, replicate: usize) -> u64 {
    derive_seed(derive_seed(derive_seed(seed, h2.to_bits()), samples as u64), replicate as u64)
}

/// Search seed shared by every mode run on one dataset.
pub fn run_seed(dataset_seed: u64) -> u64 {
    derive_seed(dataset_seed, 0x5EA2C4)
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.heritabilities.is_empty() || self.sample_sizes.is_empty() || self.modes.is_empty() {
            return Err(Error::Contract("grid lists must be non-empty".into()));
        }
        if self.replicates < 1 {
            return Err(Error::Contract("at least one replicate is required".into()));
        }
        if self.jobs < 1 {
            return Err(Error::Contract("jobs must be at least 1".into()));
        }
        self.gp_config(0, Mode::Gp).validate()
    }

    fn gp_config(&self, seed: u64, mode: Mode) -> GpConfig {
        GpConfig {
            population_size: self.population_size,
            generations: self.generations,
            seed,
            mode,
            ..GpConfig::default()
        }
    }

    /// Simulator settings for one dataset of this grid.
    pub fn sim_params(&self, h2: f64, samples: usize, seed: u64) -> SimulationParams {
        SimulationParams {
            h2,
            maf: self.maf,
            prevalence: self.prevalence,
            n_samples: samples,
            n_snps: self.n_snps,
            noise_maf_range: DEFAULT_NOISE_MAF_RANGE,
            seed,
            shuffle_columns: true,
        }
    }

    /// The dataset for one cell and replicate, from the cache directory if
    /// present there.
    pub fn dataset(&self, h2: f64, samples: usize, replicate: usize) -> Result<Dataset> {
        let seed = dataset_seed(self.seed, h2, samples, replicate);
        let cached = self.data_dir.as_ref().map(|dir| {
            let stem = format!("h2-{h2}_n-{samples}_rep-{replicate}_seed-{seed}");
            (dir.join(format!("{stem}.csv")), dir.join(format!("{stem}.manifest")))
        });
        if let Some((csv, _)) = &cached {
            if csv.exists() {
                return Dataset::load_csv(csv);
            }
        }
        let sim = simulate(&self.sim_params(h2, samples, seed))?;
        if let Some((csv, manifest)) = &cached {
            std::fs::create_dir_all(csv.parent().expect("file in a directory"))?;
            sim.data.dataset.write_csv_file(csv)?;
            std::fs::write(manifest, sim.manifest())?;
        }
        Ok(sim.data.dataset)
    }

    fn run_mode(&self, mode: GridMode, ds: &Dataset, seeds: RunSeeds, seed: u64) -> Result<(PipelineTree, Fitness, usize)> {
        let split = stratified_split(ds, self.train_fraction, seeds.split)?;
        match mode.search_mode() {
            Some(m) => {
                let result = run(&self.gp_config(seed, m), &split)?;
                Ok((result.best.genome, result.best.fitness, result.evaluations))
            }
            None => {
                let p = parse_pipeline(RF_BASELINE)?;
                let f = evaluate_pipeline(&p, &split, seeds.evaluation);
                Ok((p, f, 1))
            }
        }
    }

    fn replicate_rows(&self, h2: f64, samples: usize, replicate: usize) -> Vec<GridRow> {
        let dseed = dataset_seed(self.seed, h2, samples, replicate);
        let seed = run_seed(dseed);
        let seeds = RunSeeds::new(seed);
        let blank = |mode: GridMode, status: String| GridRow {
            h2,
            samples,
            replicate,
            mode,
            dataset_seed: dseed,
            status,
            holdout: None,
            cv_scores: Vec::new(),
            complexity: None,
            evaluations: 0,
            pipeline: String::new(),
        };
        let ds = match self.dataset(h2, samples, replicate) {
            Ok(ds) => ds,
            Err(e) => return self.modes.iter().map(|&m| blank(m, format!("error: {e}"))).collect(),
        };
        self.modes
            .iter()
            .map(|&mode| {
                let outcome = self.run_mode(mode, &ds, seeds, seed).and_then(|(p, f, evals)| {
                    let cv = if self.cv_folds > 0 {
                        crossval_pipeline(&p, &ds, self.cv_folds, derive_seed(seed, 4))?
                    } else {
                        Vec::new()
                    };
                    Ok((p, f, evals, cv))
                });
                match outcome {
                    Ok((p, f, evaluations, cv_scores)) => GridRow {
                        status: "ok".into(),
                        holdout: f.score(),
                        cv_scores,
                        complexity: Some(p.complexity()),
                        evaluations,
                        pipeline: p.to_string(),
                        ..blank(mode, String::new())
                    },
                    Err(e) => blank(mode, format!("error: {e}")),
                }
            })
            .collect()
    }

    /// Runs every cell, replicate and mode, using at most `jobs` threads.
    /// Rows come back sorted by heritability, sample size, replicate and
    /// mode whatever the completion order.
    pub fn run(&self) -> Result<Vec<GridRow>> {
        self.validate()?;
        let tasks: Vec<(f64, usize, usize)> = self
            .heritabilities
            .iter()
            .flat_map(|&h| {
                self.sample_sizes
                    .iter()
                    .flat_map(move |&n| (0..self.replicates).map(move |r| (h, n, r)))
            })
            .collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::Contract(format!("cannot start worker threads: {e}")))?;
        let mut rows: Vec<GridRow> = pool.install(|| {
            tasks
                .par_iter()
                .flat_map_iter(|&(h, n, r)| self.replicate_rows(h, n, r))
                .collect()
        });
        rows.sort_by(|a, b| {
            a.h2.total_cmp(&b.h2)
                .then(a.samples.cmp(&b.samples))
                .then(a.replicate.cmp(&b.replicate))
                .then(a.mode.cmp(&b.mode))
        });
        Ok(rows)
    }
}

pub const GRID_HEADER: &str =
    "h2,samples,replicate,mode,dataset_seed,status,holdout,cv_mean,cv_scores,complexity,evaluations,pipeline";

fn csv_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

pub fn write_grid_csv<W: Write>(rows: &[GridRow], mut out: W) -> Result<()> {
    writeln!(out, "{GRID_HEADER}")?;
    for r in rows {
        let cv: Vec<String> = r.cv_scores.iter().map(|f| f.to_string()).collect();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.h2,
            r.samples,
            r.replicate,
            r.mode,
            r.dataset_seed,
            csv_quote(&r.status),
            r.holdout.map(|v| format!("{v:.6}")).unwrap_or_default(),
            r.cv_mean().map(|v| format!("{v:.6}")).unwrap_or_default(),
            cv.join(";"),
            r.complexity.map(|c| c.to_string()).unwrap_or_default(),
            r.evaluations,
            csv_quote(&r.pipeline)
        )?;
    }
    Ok(())
}
