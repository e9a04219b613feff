//! Genetic programming over pipeline trees, plus the random-search and
//! models-only baselines.
//!
//! Fitness is a pure function of the genome (every individual is evaluated
//! with the same evaluation seed), so evaluations are memoized by canonical
//! expression text and run in parallel without affecting results.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::pipeline::{check_root, evaluate_pipeline, Fitness, Individual, Node, NodeKind, OperatorSet, PipelineTree};
use crate::seed::{derive_seed, rng_from_seed, RunSeeds};

/// Retry budget for crossover and mutation before returning the input.
pub const VARIATION_RETRIES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Gp,
    RandomSearch,
    ModelsOnly,
}

impl Mode {
    pub fn operator_set(self) -> OperatorSet {
        match self {
            Mode::ModelsOnly => OperatorSet::ModelsOnly,
            Mode::Gp | Mode::RandomSearch => OperatorSet::Full,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Gp => "gp",
            Mode::RandomSearch => "random",
            Mode::ModelsOnly => "models-only",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gp" => Ok(Mode::Gp),
            "random" | "random-search" => Ok(Mode::RandomSearch),
            "models-only" => Ok(Mode::ModelsOnly),
            other => Err(Error::Contract(format!(
                "unknown mode `{other}`; expected gp, random or models-only"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpConfig {
    pub population_size: usize,
    pub generations: usize,
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    pub elitism_fraction: f64,
    pub tournament_size: usize,
    /// Depth limit for initial pipelines and for subtrees grown by mutation.
    pub init_max_depth: u32,
    pub seed: u64,
    pub mode: Mode,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            population_size: 100,
            generations: 100,
            mutation_rate: 0.90,
            crossover_rate: 0.05,
            elitism_fraction: 0.10,
            tournament_size: 3,
            init_max_depth: 3,
            seed: 0,
            mode: Mode::Gp,
        }
    }
}

impl GpConfig {
    pub fn elite_count(&self) -> usize {
        (self.elitism_fraction * self.population_size as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let rate_ok = |r: f64| (0.0..=1.0).contains(&r);
        if !rate_ok(self.mutation_rate) || !rate_ok(self.crossover_rate) || !rate_ok(self.elitism_fraction) {
            return Err(Error::Contract("rates must lie in [0, 1]".into()));
        }
        if self.population_size < 10 {
            return Err(Error::Contract("population size must be at least 10".into()));
        }
        if self.elite_count() < 1 {
            return Err(Error::Contract("elitism must keep at least one individual".into()));
        }
        if self.elite_count() > self.population_size {
            return Err(Error::Contract("elite count exceeds the population".into()));
        }
        if self.tournament_size != 3 {
            return Err(Error::Contract("tournament size is fixed at 3".into()));
        }
        if self.init_max_depth < 1 {
            return Err(Error::Contract("initial depth must be at least 1".into()));
        }
        Ok(())
    }
}

/// Summary of one generation (or one chunk of a random search).
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    /// Best fitness seen so far in the run.
    pub best_fitness: Fitness,
    /// Mean over individuals with a numeric fitness.
    pub mean_fitness: Option<f64>,
    pub mean_complexity: f64,
    pub best_pipeline: String,
    pub n_failed: usize,
    /// How this generation's population was produced.
    pub n_elite: usize,
    pub n_crossover: usize,
    pub n_mutation: usize,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best: Individual,
    pub log: Vec<GenerationRecord>,
    /// Distinct pipelines actually evaluated.
    pub evaluations: usize,
}

pub const LOG_HEADER: &str =
    "generation,best_fitness,mean_fitness,mean_complexity,best_pipeline,n_failed,n_elite,n_crossover,n_mutation";

fn fitness_cell(f: Fitness) -> String {
    match f {
        Fitness::Failed => "failed".into(),
        Fitness::Score(s) => format!("{s:.6}"),
    }
}

/// Writes the generation log as CSV. Pipelines are quoted since they
/// contain spaces.
pub fn write_log<W: Write>(log: &[GenerationRecord], mut out: W) -> Result<()> {
    writeln!(out, "{LOG_HEADER}")?;
    for r in log {
        writeln!(
            out,
            "{},{},{},{:.4},\"{}\",{},{},{},{}",
            r.generation,
            fitness_cell(r.best_fitness),
            r.mean_fitness.map(|m| format!("{m:.6}")).unwrap_or_default(),
            r.mean_complexity,
            r.best_pipeline,
            r.n_failed,
            r.n_elite,
            r.n_crossover,
            r.n_mutation
        )?;
    }
    Ok(())
}

/// Ranks individuals: higher fitness first, then fewer operators.
fn better(a: &Individual, b: &Individual) -> bool {
    a.fitness > b.fitness || (a.fitness == b.fitness && a.complexity < b.complexity)
}

/// Three-way tournament with two-way parsimony: of three distinct random
/// individuals the least fit is dropped and the simpler survivor wins.
/// Equal complexity goes to the fitter; a full tie is a coin flip. A failed
/// individual never beats one with a numeric fitness.
pub fn tournament_select<'a, R: Rng + ?Sized>(pop: &'a [Individual], rng: &mut R) -> Result<&'a Individual> {
    if pop.len() < 3 {
        return Err(Error::Contract(format!(
            "tournament needs at least 3 individuals, got {}",
            pop.len()
        )));
    }
    let mut drawn: Vec<&Individual> = sample(rng, pop.len(), 3).iter().map(|i| &pop[i]).collect();
    // Drop the least fit; among equally unfit, the more complex one.
    let worst = (0..3)
        .min_by(|&i, &j| {
            drawn[i]
                .fitness
                .cmp(&drawn[j].fitness)
                .then(drawn[j].complexity.cmp(&drawn[i].complexity))
        })
        .expect("three draws");
    drawn.remove(worst);
    let (a, b) = (drawn[0], drawn[1]);
    let a_failed = a.fitness == Fitness::Failed;
    let b_failed = b.fitness == Fitness::Failed;
    if a_failed != b_failed {
        return Ok(if a_failed { b } else { a });
    }
    Ok(match a.complexity.cmp(&b.complexity) {
        std::cmp::Ordering::Less => a,
        std::cmp::Ordering::Greater => b,
        std::cmp::Ordering::Equal => match a.fitness.cmp(&b.fitness) {
            std::cmp::Ordering::Greater => a,
            std::cmp::Ordering::Less => b,
            std::cmp::Ordering::Equal => {
                if rng.gen_bool(0.5) {
                    a
                } else {
                    b
                }
            }
        },
    })
}

fn valid_in(root: &Node, ops: OperatorSet) -> bool {
    check_root(root).is_ok() && root.kinds().iter().all(|k| ops.allows(*k))
}

/// One-point subtree crossover. Swaps a random subtree of `a` with a random
/// subtree of `b`; retries on invalid offspring and falls back to the
/// unchanged parents.
pub fn crossover_one_point<R: Rng + ?Sized>(
    a: &PipelineTree,
    b: &PipelineTree,
    rng: &mut R,
) -> (PipelineTree, PipelineTree) {
    for _ in 0..VARIATION_RETRIES {
        let i = rng.gen_range(0..a.size());
        let j = rng.gen_range(0..b.size());
        let mut ra = a.root().clone();
        let mut rb = b.root().clone();
        let sub_a = a.root().get(i).expect("index in range").clone();
        let sub_b = b.root().get(j).expect("index in range").clone();
        *ra.get_mut(i).expect("index in range") = sub_b;
        *rb.get_mut(j).expect("index in range") = sub_a;
        if let (Ok(x), Ok(y)) = (PipelineTree::new(ra), PipelineTree::new(rb)) {
            return (x, y);
        }
    }
    (a.clone(), b.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MutationKind {
    /// Replace a random subtree (or hyperparameter) with a fresh random one.
    Uniform,
    /// Splice a new operator above a random node.
    Insert,
    /// Remove a random operator, keeping its first input.
    Shrink,
}

pub const MUTATION_KINDS: [MutationKind; 3] = [MutationKind::Uniform, MutationKind::Insert, MutationKind::Shrink];

fn try_mutation<R: Rng + ?Sized>(
    root: &Node,
    kind: MutationKind,
    ops: OperatorSet,
    max_depth: u32,
    rng: &mut R,
) -> Option<Node> {
    let mut out = root.clone();
    let size = root.size();
    match kind {
        MutationKind::Uniform => {
            let n_hyper = root.hyperparameter_count();
            let t = rng.gen_range(0..size + n_hyper);
            if t < size {
                let fresh = Node::random(rng, 1, max_depth, ops, t == 0);
                *out.get_mut(t)? = fresh;
            } else {
                let (v, range) = out.hyperparameter_mut(t - size)?;
                *v = rng.gen_range(range);
            }
        }
        MutationKind::Insert => {
            let t = rng.gen_range(0..size);
            let operators = ops.operators();
            let kind = operators[rng.gen_range(0..operators.len())];
            let slot = out.get_mut(t)?;
            let below = std::mem::replace(slot, Node::Input);
            *slot = Node::operator_over(kind, below, Node::Input, rng);
        }
        MutationKind::Shrink => {
            let operators: Vec<usize> = (0..size).filter(|&i| root.get(i).map(Node::kind) != Some(NodeKind::Input)).collect();
            let t = operators[rng.gen_range(0..operators.len())];
            let slot = out.get_mut(t)?;
            let first = slot.children().first().map(|c| (*c).clone())?;
            *slot = first;
        }
    }
    valid_in(&out, ops).then_some(out)
}

/// Applies one mutation chosen uniformly among the three kinds. The chosen
/// kind is retried on invalid results; after the retry budget the input is
/// returned unchanged. Also returns the kind that was chosen.
pub fn mutate_with_kind<R: Rng + ?Sized>(
    p: &PipelineTree,
    ops: OperatorSet,
    max_depth: u32,
    rng: &mut R,
) -> (PipelineTree, MutationKind) {
    let kind = MUTATION_KINDS[rng.gen_range(0..3)];
    for _ in 0..VARIATION_RETRIES {
        if let Some(root) = try_mutation(p.root(), kind, ops, max_depth, rng) {
            return (PipelineTree::new(root).expect("validated"), kind);
        }
    }
    (p.clone(), kind)
}

pub fn mutate<R: Rng + ?Sized>(p: &PipelineTree, ops: OperatorSet, max_depth: u32, rng: &mut R) -> PipelineTree {
    mutate_with_kind(p, ops, max_depth, rng).0
}

/// Memoized fitness evaluation keyed by canonical pipeline text.
struct Evaluator<'a> {
    ds: &'a Dataset,
    eval_seed: u64,
    cache: HashMap<String, Fitness>,
}

impl<'a> Evaluator<'a> {
    fn new(ds: &'a Dataset, eval_seed: u64) -> Self {
        Evaluator {
            ds,
            eval_seed,
            cache: HashMap::new(),
        }
    }

    fn evaluate(&mut self, genomes: Vec<PipelineTree>) -> Vec<Individual> {
        let keys: Vec<String> = genomes.iter().map(|g| g.to_string()).collect();
        let mut todo: Vec<(&String, &PipelineTree)> = Vec::new();
        let mut queued = std::collections::HashSet::new();
        for (k, g) in keys.iter().zip(&genomes) {
            if !self.cache.contains_key(k) && queued.insert(k) {
                todo.push((k, g));
            }
        }
        let (ds, seed) = (self.ds, self.eval_seed);
        let fresh: Vec<(String, Fitness)> = todo
            .par_iter()
            .map(|(k, g)| ((*k).clone(), evaluate_pipeline(g, ds, seed)))
            .collect();
        self.cache.extend(fresh);
        genomes
            .into_iter()
            .zip(&keys)
            .map(|(g, k)| Individual::new(g, self.cache[k]))
            .collect()
    }
}

fn check_split(ds: &Dataset) -> Result<()> {
    let has = |s: Split| ds.partition().contains(&s);
    if !has(Split::Train) || !has(Split::Test) {
        return Err(Error::Data("search needs a dataset with both Train and Test rows".into()));
    }
    Ok(())
}

fn summarize(
    generation: usize,
    pop: &[Individual],
    best: &Individual,
    counts: (usize, usize, usize),
) -> GenerationRecord {
    let scores: Vec<f64> = pop.iter().filter_map(|i| i.fitness.score()).collect();
    GenerationRecord {
        generation,
        best_fitness: best.fitness,
        mean_fitness: (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64),
        mean_complexity: pop.iter().map(|i| i.complexity as f64).sum::<f64>() / pop.len() as f64,
        best_pipeline: best.genome.to_string(),
        n_failed: pop.len() - scores.len(),
        n_elite: counts.0,
        n_crossover: counts.1,
        n_mutation: counts.2,
    }
}

fn best_of(pop: &[Individual]) -> &Individual {
    pop.iter()
        .fold(&pop[0], |best, i| if better(i, best) { i } else { best })
}

/// Runs the configured search. `ds` must already be split into Train and
/// Test rows; the run is a deterministic function of `(cfg, ds)`.
pub fn run(cfg: &GpConfig, ds: &Dataset) -> Result<SearchResult> {
    match cfg.mode {
        Mode::RandomSearch => run_random_search(cfg, ds),
        Mode::Gp | Mode::ModelsOnly => run_gp(cfg, ds),
    }
}

/// The generational GP loop. Elites are clones of the current best; the
/// rest are tournament winners, of which a fixed share undergoes crossover
/// and a fixed share of the untouched remainder undergoes mutation.
pub fn run_gp(cfg: &GpConfig, ds: &Dataset) -> Result<SearchResult> {
    cfg.validate()?;
    check_split(ds)?;
    let seeds = RunSeeds::new(cfg.seed);
    let ops = cfg.mode.operator_set();
    let mut rng = rng_from_seed(seeds.search);
    let mut evaluator = Evaluator::new(ds, seeds.evaluation);

    let initial: Vec<PipelineTree> = (0..cfg.population_size)
        .map(|_| PipelineTree::random_with(&mut rng, cfg.init_max_depth, ops))
        .collect();
    let mut pop = evaluator.evaluate(initial);
    let mut best = best_of(&pop).clone();
    let mut log = vec![summarize(0, &pop, &best, (0, 0, 0))];

    let n_elite = cfg.elite_count();
    let eligible = cfg.population_size - n_elite;
    let n_crossover = 2 * ((cfg.crossover_rate * eligible as f64).round() as usize / 2);
    let n_mutation = (cfg.mutation_rate * (eligible - n_crossover) as f64).round() as usize;

    for generation in 1..=cfg.generations {
        let elite = best_of(&pop).genome.clone();
        let mut next: Vec<PipelineTree> = vec![elite; n_elite];
        let mut offspring: Vec<PipelineTree> = (0..eligible)
            .map(|_| tournament_select(&pop, &mut rng).map(|i| i.genome.clone()))
            .collect::<Result<_>>()?;
        for pair in offspring[..n_crossover].chunks_exact_mut(2) {
            let (x, y) = crossover_one_point(&pair[0], &pair[1], &mut rng);
            pair[0] = x;
            pair[1] = y;
        }
        for g in &mut offspring[n_crossover..n_crossover + n_mutation] {
            *g = mutate(g, ops, cfg.init_max_depth, &mut rng);
        }
        next.extend(offspring);

        pop = evaluator.evaluate(next);
        let gen_best = best_of(&pop);
        if better(gen_best, &best) {
            best = gen_best.clone();
        }
        log.push(summarize(generation, &pop, &best, (n_elite, n_crossover, n_mutation)));
    }

    Ok(SearchResult {
        best,
        log,
        evaluations: evaluator.cache.len(),
    })
}

/// Seed of the `i`-th random-search candidate. Budgets share a prefix, so
/// a larger budget never finds a worse best.
pub fn random_candidate_seed(search_seed: u64, i: usize) -> u64 {
    derive_seed(search_seed, i as u64)
}

/// Evaluates `population_size × generations` independent random pipelines
/// and keeps the best. The log has one row per population-sized chunk.
pub fn run_random_search(cfg: &GpConfig, ds: &Dataset) -> Result<SearchResult> {
    cfg.validate()?;
    random_search_budget(cfg, ds, cfg.population_size * cfg.generations.max(1))
}

/// Random search with an explicit number of candidates.
pub fn random_search_budget(cfg: &GpConfig, ds: &Dataset, budget: usize) -> Result<SearchResult> {
    check_split(ds)?;
    if budget == 0 {
        return Err(Error::Contract("random search budget must be at least 1".into()));
    }
    let seeds = RunSeeds::new(cfg.seed);
    let ops = cfg.mode.operator_set();
    let mut evaluator = Evaluator::new(ds, seeds.evaluation);
    let chunk = cfg.population_size.max(1);
    let mut best: Option<Individual> = None;
    let mut log = Vec::new();
    for (generation, start) in (0..budget).step_by(chunk).enumerate() {
        let genomes = (start..(start + chunk).min(budget))
            .map(|i| {
                let mut rng = rng_from_seed(random_candidate_seed(seeds.search, i));
                PipelineTree::random_with(&mut rng, cfg.init_max_depth, ops)
            })
            .collect();
        let batch = evaluator.evaluate(genomes);
        let batch_best = best_of(&batch);
        if best.as_ref().map_or(true, |b| better(batch_best, b)) {
            best = Some(batch_best.clone());
        }
        log.push(summarize(generation, &batch, best.as_ref().expect("set"), (0, 0, 0)));
    }
    Ok(SearchResult {
        best: best.expect("budget is positive"),
        log,
        evaluations: evaluator.cache.len(),
    })
}
