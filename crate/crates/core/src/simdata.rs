//! Case/control SNP data whose signal lives only in pairwise interactions.
//!
//! A two-locus model is a 3×3 penetrance table over genotype counts. It is
//! *pure* when every single-locus marginal penetrance (weighted by
//! Hardy–Weinberg genotype frequencies) equals the prevalence, so neither
//! locus shows a main effect on its own. Heritability is the genotypic
//! variance of penetrance over `K(1−K)`.

use std::fmt::Write as _;
use std::io::Write;

use rand::Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed};

pub type Table = [[f64; 3]; 3];

pub const DEFAULT_PREVALENCE: f64 = 0.4;
pub const DEFAULT_NOISE_MAF_RANGE: (f64, f64) = (0.05, 0.5);
pub const MODEL_ATTEMPTS: usize = 100_000;
const PROJECTION_ROUNDS: usize = 50;
pub const N_MODELS: usize = 4;
const PURITY_TOLERANCE: f64 = 1e-6;
const HERITABILITY_TOLERANCE: f64 = 0.05;
/// Candidate draws allowed per requested sample during rejection sampling.
const DRAWS_PER_SAMPLE: usize = 1_000;

/// Genotype frequencies `(1−q)², 2q(1−q), q²`.
pub fn hwe_frequencies(q: f64) -> [f64; 3] {
    [(1.0 - q) * (1.0 - q), 2.0 * q * (1.0 - q), q * q]
}

/// Marginal penetrance of each genotype at the first locus (rows) and at
/// the second locus (columns).
pub fn marginal_penetrances(p: &Table, q: f64) -> ([f64; 3], [f64; 3]) {
    let w = hwe_frequencies(q);
    let mut rows = [0.0; 3];
    let mut cols = [0.0; 3];
    for i in 0..3 {
        for j in 0..3 {
            rows[i] += w[j] * p[i][j];
            cols[j] += w[i] * p[i][j];
        }
    }
    (rows, cols)
}

pub fn heritability(p: &Table, q: f64, prevalence: f64) -> f64 {
    let w = hwe_frequencies(q);
    let mut var = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let d = p[i][j] - prevalence;
            var += w[i] * w[j] * d * d;
        }
    }
    var / (prevalence * (1.0 - prevalence))
}

/// Removes both weighted marginal effects from a deviation table:
/// `d'[i][j] = d[i][j] − r[i] − c[j] + m`.
fn project_pure(d: &mut Table, w: &[f64; 3]) {
    let mut r = [0.0; 3];
    let mut c = [0.0; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i] += w[j] * d[i][j];
            c[j] += w[i] * d[i][j];
        }
    }
    let m: f64 = (0..3).map(|i| w[i] * r[i]).sum();
    for i in 0..3 {
        for j in 0..3 {
            d[i][j] += m - r[i] - c[j];
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpistaticModel {
    pub penetrance: Table,
    pub maf: f64,
    pub prevalence: f64,
    /// Heritability of the table as built.
    pub heritability: f64,
}

impl EpistaticModel {
    /// The table `p ≡ K`: pure, with zero heritability.
    pub fn constant(maf: f64, prevalence: f64) -> Self {
        EpistaticModel {
            penetrance: [[prevalence; 3]; 3],
            maf,
            prevalence,
            heritability: 0.0,
        }
    }

    pub fn is_pure(&self, tolerance: f64) -> bool {
        let (rows, cols) = marginal_penetrances(&self.penetrance, self.maf);
        rows.iter().chain(&cols).all(|m| (m - self.prevalence).abs() <= tolerance)
    }
}

/// Random-search construction of a pure two-locus model at the requested
/// heritability. Each attempt draws a random deviation table, projects out
/// marginal effects, scales to the target and, if some penetrance leaves
/// `[0, 1]`, clamps and repeats the projection.
pub fn generate_epistatic_model<R: Rng + ?Sized>(h2: f64, maf: f64, prevalence: f64, rng: &mut R) -> Result<EpistaticModel> {
    if !(h2 > 0.0 && h2 < 1.0) || !(maf > 0.0 && maf <= 0.5) || !(prevalence > 0.0 && prevalence < 1.0) {
        return Err(Error::Contract(format!(
            "model parameters out of range: h2={h2}, maf={maf}, prevalence={prevalence}"
        )));
    }
    let w = hwe_frequencies(maf);
    let k = prevalence;
    for _ in 0..MODEL_ATTEMPTS {
        let mut d: Table = [[0.0; 3]; 3];
        for row in d.iter_mut() {
            for v in row.iter_mut() {
                *v = rng.gen_range(-1.0..=1.0);
            }
        }
        for _ in 0..PROJECTION_ROUNDS {
            project_pure(&mut d, &w);
            let p = d.map(|row| row.map(|v| k + v));
            let current = heritability(&p, maf, k);
            if current <= 1e-12 {
                break;
            }
            let scale = (h2 / current).sqrt();
            let p = d.map(|row| row.map(|v| k + v * scale));
            if p.iter().flatten().all(|v| (0.0..=1.0).contains(v)) {
                let model = EpistaticModel {
                    penetrance: p,
                    maf,
                    prevalence: k,
                    heritability: heritability(&p, maf, k),
                };
                if model.is_pure(PURITY_TOLERANCE) && (model.heritability - h2).abs() <= HERITABILITY_TOLERANCE * h2 {
                    return Ok(model);
                }
            }
            d = p.map(|row| row.map(|v| v.clamp(0.0, 1.0) - k));
        }
    }
    Err(Error::Generation(format!(
        "no pure model with h2={h2}, maf={maf}, prevalence={prevalence} found in {MODEL_ATTEMPTS} attempts"
    )))
}

fn draw_genotype<R: Rng + ?Sized>(q: f64, rng: &mut R) -> i32 {
    i32::from(rng.gen_bool(q)) + i32::from(rng.gen_bool(q))
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub dataset: Dataset,
    /// Column indices of each model's two loci, in model order.
    pub predictive_columns: Vec<[usize; 2]>,
    /// Minor allele frequency used for every column.
    pub column_mafs: Vec<f64>,
}

/// Draws a balanced case/control sample. Model `m` governs loci `2m` and
/// `2m+1` before the column shuffle; every other locus is noise with a MAF
/// drawn uniformly from `noise_maf_range`. Disease probability is the mean
/// of the models' penetrances. Individuals are drawn until exactly half the
/// requested samples are cases and half controls.
pub fn simulate_dataset(
    models: &[EpistaticModel],
    n_samples: usize,
    n_snps: usize,
    noise_maf_range: (f64, f64),
    seed: u64,
    shuffle_columns: bool,
) -> Result<SimulatedData> {
    if n_samples == 0 || n_samples % 2 != 0 {
        return Err(Error::Contract(format!("sample count must be even and positive, got {n_samples}")));
    }
    if models.is_empty() || 2 * models.len() > n_snps {
        return Err(Error::Contract(format!(
            "{} models need {} predictive loci but only {n_snps} SNPs were requested",
            models.len(),
            2 * models.len()
        )));
    }
    let (lo, hi) = noise_maf_range;
    if !(lo > 0.0 && lo <= hi && hi <= 0.5) {
        return Err(Error::Contract(format!("noise MAF range ({lo}, {hi}) must lie within (0, 0.5]")));
    }

    let mut rng = rng_from_seed(derive_seed(seed, 0));
    let n_pred = 2 * models.len();
    let mut mafs: Vec<f64> = models.iter().flat_map(|m| [m.maf, m.maf]).collect();
    mafs.extend((n_pred..n_snps).map(|_| rng.gen_range(lo..=hi)));

    let half = n_samples / 2;
    let mut kept = [0usize; 2];
    let mut rows: Vec<Vec<i32>> = Vec::with_capacity(n_samples);
    let mut labels: Vec<u8> = Vec::with_capacity(n_samples);
    let mut draws = 0usize;
    while kept[0] < half || kept[1] < half {
        draws += 1;
        if draws > DRAWS_PER_SAMPLE * n_samples {
            return Err(Error::Simulation(format!(
                "rejection sampling gave up after {} draws with {} controls and {} cases",
                draws - 1,
                kept[0],
                kept[1]
            )));
        }
        let genotypes: Vec<i32> = mafs.iter().map(|&q| draw_genotype(q, &mut rng)).collect();
        let risk = models
            .iter()
            .enumerate()
            .map(|(m, model)| model.penetrance[genotypes[2 * m] as usize][genotypes[2 * m + 1] as usize])
            .sum::<f64>()
            / models.len() as f64;
        let label = u8::from(rng.gen_bool(risk.clamp(0.0, 1.0)));
        if kept[label as usize] < half {
            kept[label as usize] += 1;
            rows.push(genotypes);
            labels.push(label);
        }
    }

    // position[original locus] = output column.
    let mut position: Vec<usize> = (0..n_snps).collect();
    if shuffle_columns {
        use rand::seq::SliceRandom;
        position.shuffle(&mut rng_from_seed(derive_seed(seed, 1)));
    }
    let mut columns = vec![Vec::new(); n_snps];
    let mut column_mafs = vec![0.0; n_snps];
    for (locus, &col) in position.iter().enumerate() {
        columns[col] = rows.iter().map(|r| r[locus]).collect();
        column_mafs[col] = mafs[locus];
    }
    let names = (0..n_snps).map(|j| format!("snp{j}")).collect();
    let dataset = Dataset::new(names, columns, labels)?;
    let predictive_columns = (0..models.len()).map(|m| [position[2 * m], position[2 * m + 1]]).collect();
    Ok(SimulatedData {
        dataset,
        predictive_columns,
        column_mafs,
    })
}

/// Everything needed to regenerate one simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationParams {
    pub h2: f64,
    pub maf: f64,
    pub prevalence: f64,
    pub n_samples: usize,
    pub n_snps: usize,
    pub noise_maf_range: (f64, f64),
    pub seed: u64,
    pub shuffle_columns: bool,
}

impl SimulationParams {
    pub fn new(h2: f64, maf: f64, n_samples: usize, seed: u64) -> Self {
        SimulationParams {
            h2,
            maf,
            prevalence: DEFAULT_PREVALENCE,
            n_samples,
            n_snps: 100,
            noise_maf_range: DEFAULT_NOISE_MAF_RANGE,
            seed,
            shuffle_columns: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub params: SimulationParams,
    pub models: Vec<EpistaticModel>,
    pub data: SimulatedData,
}

/// Builds four models and a dataset from one seed. Model `m` draws from
/// `derive_seed(seed, 100 + m)`; the sample itself from `seed`.
pub fn simulate(params: &SimulationParams) -> Result<Simulation> {
    let models = (0..N_MODELS)
        .map(|m| {
            let mut rng = rng_from_seed(derive_seed(params.seed, 100 + m as u64));
            generate_epistatic_model(params.h2, params.maf, params.prevalence, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let data = simulate_dataset(
        &models,
        params.n_samples,
        params.n_snps,
        params.noise_maf_range,
        params.seed,
        params.shuffle_columns,
    )?;
    Ok(Simulation {
        params: params.clone(),
        models,
        data,
    })
}

impl Simulation {
    /// Plain `key=value` description of the run and its ground truth.
    pub fn manifest(&self) -> String {
        let p = &self.params;
        let mut s = String::new();
        let _ = writeln!(s, "seed={}", p.seed);
        let _ = writeln!(s, "h2={}", p.h2);
        let _ = writeln!(s, "maf={}", p.maf);
        let _ = writeln!(s, "prevalence={}", p.prevalence);
        let _ = writeln!(s, "samples={}", p.n_samples);
        let _ = writeln!(s, "snps={}", p.n_snps);
        let _ = writeln!(s, "noise_maf_range={},{}", p.noise_maf_range.0, p.noise_maf_range.1);
        let _ = writeln!(s, "shuffle_columns={}", p.shuffle_columns);
        let _ = writeln!(s, "combination=mean");
        let _ = writeln!(s, "models={}", self.models.len());
        let names = self.data.dataset.feature_names();
        for (m, (model, cols)) in self.models.iter().zip(&self.data.predictive_columns).enumerate() {
            let cells: Vec<String> = model.penetrance.iter().flatten().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "model{m}.penetrance={}", cells.join(","));
            let _ = writeln!(s, "model{m}.heritability={}", model.heritability);
            let _ = writeln!(s, "model{m}.columns={},{}", names[cols[0]], names[cols[1]]);
        }
        let all: Vec<String> = self
            .data
            .predictive_columns
            .iter()
            .flatten()
            .map(|c| c.to_string())
            .collect();
        let _ = writeln!(s, "predictive_columns={}", all.join(","));
        s
    }

    pub fn write_manifest<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(self.manifest().as_bytes())?;
        Ok(())
    }
}
