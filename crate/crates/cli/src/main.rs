//! Command-line front end: simulate data, search for pipelines, score and
//! explain them, and run experiment grids.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pipeforge::evolve::{self, write_log, GpConfig, Mode};
use pipeforge::grid::{write_grid_csv, ExperimentGrid, GridMode};
use pipeforge::pipeline::{crossval_pipeline, evaluate_pipeline, parse_pipeline, Fitness, PipelineTree};
use pipeforge::report::pipeline_report;
use pipeforge::seed::RunSeeds;
use pipeforge::simdata::{simulate, SimulationParams, DEFAULT_PREVALENCE};
use pipeforge::{stratified_split, Dataset};

#[derive(Parser)]
#[command(name = "pipeforge", version, about = "Evolve tree-shaped classification pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an epistatic case/control SNP dataset and its manifest.
    Simulate(SimulateArgs),
    /// Search for the best pipeline on a dataset.
    Optimize(OptimizeArgs),
    /// Score a saved pipeline by cross-validation or on the holdout split.
    Evaluate(EvaluateArgs),
    /// Per-step accuracies and feature importances for a saved pipeline.
    Report(ReportArgs),
    /// Run a heritability × sample size × replicate experiment grid.
    Grid(GridArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Target heritability of each interaction model.
    #[arg(long)]
    h2: f64,
    /// Minor allele frequency of the predictive SNPs.
    #[arg(long, default_value_t = 0.2)]
    maf: f64,
    #[arg(long, default_value_t = DEFAULT_PREVALENCE)]
    prevalence: f64,
    #[arg(long, default_value_t = 800)]
    samples: usize,
    #[arg(long, default_value_t = 100)]
    snps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    noise_maf_min: f64,
    #[arg(long, default_value_t = 0.5)]
    noise_maf_max: f64,
    /// Keep predictive SNPs in the first columns.
    #[arg(long)]
    no_shuffle: bool,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to the output path with a `.manifest` extension.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

/// Split and evaluation seeds shared by `optimize`, `evaluate --holdout`
/// and `report`.
#[derive(Args)]
struct SplitArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.75)]
    train_fraction: f64,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long)]
    input: PathBuf,
    /// gp, random or models-only.
    #[arg(long, default_value = "gp")]
    mode: String,
    #[arg(long, default_value_t = 100)]
    pop: usize,
    #[arg(long, default_value_t = 100)]
    gens: usize,
    #[arg(long, default_value_t = 0.90)]
    mutation_rate: f64,
    #[arg(long, default_value_t = 0.05)]
    crossover_rate: f64,
    #[arg(long, default_value_t = 0.10)]
    elitism: f64,
    #[arg(long, default_value_t = 3)]
    init_depth: u32,
    #[command(flatten)]
    split: SplitArgs,
    /// Where to write the best pipeline.
    #[arg(long)]
    out: PathBuf,
    /// Where to write the per-generation log.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pipeline: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Number of stratified folds.
    #[arg(long, conflicts_with = "holdout")]
    cv: Option<usize>,
    /// Score on the Test rows of the same split `optimize` uses.
    #[arg(long)]
    holdout: bool,
    #[command(flatten)]
    split: SplitArgs,
    /// Scores CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    pipeline: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    split: SplitArgs,
    /// Per-step accuracy CSV.
    #[arg(long)]
    steps_out: PathBuf,
    /// Top feature importances per step.
    #[arg(long)]
    importance_out: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.2, 0.4])]
    h2: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![200, 400, 800, 1600])]
    samples: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    replicates: usize,
    #[arg(long, value_delimiter = ',', default_values_t = vec!["gp".to_string(), "random-search".to_string(), "models-only".to_string(), "rf-baseline".to_string()])]
    modes: Vec<String>,
    #[arg(long, default_value_t = 0.2)]
    maf: f64,
    #[arg(long, default_value_t = DEFAULT_PREVALENCE)]
    prevalence: f64,
    #[arg(long, default_value_t = 100)]
    snps: usize,
    #[arg(long, default_value_t = 100)]
    pop: usize,
    #[arg(long, default_value_t = 100)]
    gens: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.75)]
    train_fraction: f64,
    /// Folds for re-scoring each best pipeline; 0 skips it.
    #[arg(long, default_value_t = 10)]
    cv: usize,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Cache simulated datasets here.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn load(path: &Path) -> Result<Dataset> {
    Dataset::load_csv(path).with_context(|| format!("cannot load {}", path.display()))
}

fn load_pipeline(path: &Path) -> Result<PipelineTree> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_pipeline(&text).with_context(|| format!("invalid pipeline in {}", path.display()))
}

fn split_for(ds: &Dataset, args: &SplitArgs) -> Result<(Dataset, RunSeeds)> {
    let seeds = RunSeeds::new(args.seed);
    Ok((stratified_split(ds, args.train_fraction, seeds.split)?, seeds))
}

fn fitness_cell(f: Fitness) -> String {
    match f {
        Fitness::Failed => "failed".into(),
        Fitness::Score(s) => format!("{s:.6}"),
    }
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let params = SimulationParams {
        h2: a.h2,
        maf: a.maf,
        prevalence: a.prevalence,
        n_samples: a.samples,
        n_snps: a.snps,
        noise_maf_range: (a.noise_maf_min, a.noise_maf_max),
        seed: a.seed,
        shuffle_columns: !a.no_shuffle,
    };
    let sim = simulate(&params)?;
    sim.data.dataset.write_csv_file(&a.out)?;
    let manifest = a.manifest.unwrap_or_else(|| a.out.with_extension("manifest"));
    sim.write_manifest(create(&manifest)?)?;
    println!("wrote {} and {}", a.out.display(), manifest.display());
    Ok(())
}

fn cmd_optimize(a: OptimizeArgs) -> Result<()> {
    let mode: Mode = a.mode.parse()?;
    let ds = load(&a.input)?;
    let (split, _) = split_for(&ds, &a.split)?;
    let cfg = GpConfig {
        population_size: a.pop,
        generations: a.gens,
        mutation_rate: a.mutation_rate,
        crossover_rate: a.crossover_rate,
        elitism_fraction: a.elitism,
        init_max_depth: a.init_depth,
        seed: a.split.seed,
        mode,
        ..GpConfig::default()
    };
    let result = evolve::run(&cfg, &split)?;
    let mut out = create(&a.out)?;
    writeln!(out, "{}", result.best.genome)?;
    out.flush()?;
    if let Some(log) = &a.log {
        let mut w = create(log)?;
        write_log(&result.log, &mut w)?;
        w.flush()?;
    }
    println!(
        "best holdout balanced accuracy {} with {} operators: {}",
        fitness_cell(result.best.fitness),
        result.best.complexity,
        result.best.genome
    );
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let p = load_pipeline(&a.pipeline)?;
    let ds = load(&a.input)?;
    let mut body = String::new();
    if let Some(k) = a.cv {
        let scores = crossval_pipeline(&p, &ds, k, a.split.seed)?;
        body.push_str("fold,balanced_accuracy\n");
        for (f, s) in scores.iter().enumerate() {
            body.push_str(&format!("{},{}\n", f + 1, fitness_cell(*s)));
        }
    } else if a.holdout {
        let (split, seeds) = split_for(&ds, &a.split)?;
        let f = evaluate_pipeline(&p, &split, seeds.evaluation);
        body.push_str("split,balanced_accuracy\n");
        body.push_str(&format!("holdout,{}\n", fitness_cell(f)));
    } else {
        bail!("choose either --cv <k> or --holdout");
    }
    match &a.out {
        Some(path) => std::fs::write(path, body).with_context(|| format!("cannot write {}", path.display()))?,
        None => io::stdout().write_all(body.as_bytes())?,
    }
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let p = load_pipeline(&a.pipeline)?;
    let ds = load(&a.input)?;
    let (split, seeds) = split_for(&ds, &a.split)?;
    let report = pipeline_report(&p, &split, seeds.evaluation);
    let mut steps = create(&a.steps_out)?;
    report.write_accuracy_csv(&mut steps)?;
    steps.flush()?;
    let mut imp = create(&a.importance_out)?;
    report.write_importance_csv(&mut imp)?;
    imp.flush()?;
    if report.fitness == Fitness::Failed {
        eprintln!("warning: the pipeline failed after {} step(s)", report.steps.len());
    }
    println!("{} step(s); final balanced accuracy {}", report.steps.len(), fitness_cell(report.fitness));
    Ok(())
}

fn cmd_grid(a: GridArgs) -> Result<()> {
    let modes = a
        .modes
        .iter()
        .map(|m| m.parse::<GridMode>())
        .collect::<pipeforge::Result<Vec<_>>>()?;
    let grid = ExperimentGrid {
        heritabilities: a.h2,
        sample_sizes: a.samples,
        replicates: a.replicates,
        modes,
        maf: a.maf,
        prevalence: a.prevalence,
        n_snps: a.snps,
        seed: a.seed,
        population_size: a.pop,
        generations: a.gens,
        train_fraction: a.train_fraction,
        cv_folds: a.cv,
        jobs: a.jobs,
        data_dir: a.data_dir,
    };
    let rows = grid.run()?;
    let mut out = create(&a.out)?;
    write_grid_csv(&rows, &mut out)?;
    out.flush()?;
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    println!("wrote {} rows to {} ({failed} failed)", rows.len(), a.out.display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Report(a) => cmd_report(a),
        Command::Grid(a) => cmd_grid(a),
    }
}
