//! Seeded comparison runs: ground truth, noise, every algorithm, exact ratios.

use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{cauchy_sketch_l1_lowrank, synthetic_base, truncate};
use crate::error::{Error, Result};
use crate::io::{load_matrix, MatrixFormat};
use crate::linalg::{svd, Svd};
use crate::matrix::{entrywise_norm, DenseMatrix};
use crate::noise::{apply_paper_scaling, NoiseSpec};
use crate::rng::derive_seed;
use crate::selection::{
    default_median_group, median_heuristic, noisy_lowrank_approx, uniform_css, NoisyCssParams,
};

pub const DEFAULT_REPEATS: usize = 5;
pub const DEFAULT_NOISY_CSS_EPS: f64 = 0.5;
const BASE_TAG: u64 = 0xB45E;
const NOISE_TAG: u64 = 0x7015E;
const CELL_TAG: u64 = 0xCE11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dataset {
    /// `n × d` uniform integers in `{0, …, 9}`, drawn from the master seed.
    Synthetic { n: usize, d: usize },
    File {
        path: PathBuf,
        format: MatrixFormat,
        #[serde(default)]
        drop_label_column: bool,
        /// Files store one sample per row; the experiment selects samples as
        /// columns, so files are transposed unless this is turned off.
        #[serde(default = "default_true")]
        transpose: bool,
    },
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Svd,
    #[serde(rename = "swz17_style")]
    Swz17Style,
    UniformCss,
    MedianHeuristic,
    NoisyCss,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Svd,
        Algorithm::Swz17Style,
        Algorithm::UniformCss,
        Algorithm::MedianHeuristic,
        Algorithm::NoisyCss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Svd => "svd",
            Algorithm::Swz17Style => "swz17_style",
            Algorithm::UniformCss => "uniform_css",
            Algorithm::MedianHeuristic => "median_heuristic",
            Algorithm::NoisyCss => "noisy_css",
        }
    }

    fn tag(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: Dataset,
    pub k_list: Vec<usize>,
    /// The noise seed is mixed with the master seed and the rank, so every
    /// rank gets its own draw.
    pub noise: NoiseSpec,
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Multiply the noise by `‖A*‖₁ / (20·n·d)`.
    #[serde(default = "default_true")]
    pub paper_scaling: bool,
    #[serde(default = "default_noisy_eps")]
    pub noisy_css_eps: f64,
}

fn default_repeats() -> usize {
    DEFAULT_REPEATS
}

fn default_noisy_eps() -> f64 {
    DEFAULT_NOISY_CSS_EPS
}

impl ExperimentConfig {
    pub fn synthetic(n: usize, d: usize, k_list: Vec<usize>, noise: NoiseSpec, seed: u64) -> Self {
        Self {
            dataset: Dataset::Synthetic { n, d },
            k_list,
            noise,
            algorithms: Algorithm::ALL.to_vec(),
            repeats: DEFAULT_REPEATS,
            seed,
            output: None,
            paper_scaling: true,
            noisy_css_eps: DEFAULT_NOISY_CSS_EPS,
        }
    }

    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::invalid("repeats must be at least 1"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::invalid("at least one algorithm is required"));
        }
        if self.k_list.is_empty() || self.k_list.contains(&0) {
            return Err(Error::invalid(
                "ranks must be a non-empty list of positive values",
            ));
        }
        if !(self.noisy_css_eps > 0.0 && self.noisy_css_eps < 1.0) {
            return Err(Error::invalid(format!(
                "noisy_css_eps must lie in (0, 1), got {}",
                self.noisy_css_eps
            )));
        }
        if let Dataset::Synthetic { n, d } = self.dataset {
            self.validate_shape(n, d)?;
        }
        self.noise.validate()
    }

    pub fn validate_shape(&self, n: usize, d: usize) -> Result<()> {
        let limit = n.min(d);
        match self.k_list.iter().find(|&&k| k > limit) {
            Some(k) => Err(Error::invalid(format!("rank {k} exceeds min({n}, {d})"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    /// Exact `‖B − A‖₁`.
    pub cost: f64,
    /// `cost / ‖Δ‖₁`; absent when the instance is noiseless.
    pub ratio: Option<f64>,
    /// Rank bound of the output (the bicriteria method may exceed `k`).
    pub output_rank: usize,
    pub time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub algorithm: Algorithm,
    pub k: usize,
    pub noise_mass: f64,
    pub noiseless: bool,
    pub runs: Vec<RunRecord>,
    pub best_ratio: Option<f64>,
    pub best_cost: Option<f64>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<CellReport>,
}

impl ExperimentReport {
    pub fn cell(&self, algorithm: Algorithm, k: usize) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.algorithm == algorithm && c.k == k)
    }

    /// Copy with every timing field zeroed.
    pub fn without_timing(&self) -> Self {
        let mut out = self.clone();
        for run in out.cells.iter_mut().flat_map(|c| c.runs.iter_mut()) {
            run.time_ms = 0.0;
        }
        out
    }

    /// JSON of [`Self::without_timing`], for byte-level comparison.
    pub fn fingerprint(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.without_timing())?)
    }
}

fn load_base(config: &ExperimentConfig) -> Result<DenseMatrix> {
    match &config.dataset {
        Dataset::Synthetic { n, d } => synthetic_base(*n, *d, derive_seed(config.seed, BASE_TAG)),
        Dataset::File {
            path,
            format,
            drop_label_column,
            transpose,
        } => {
            let m = load_matrix(path, *format, *drop_label_column)?;
            Ok(if *transpose { m.transpose() } else { m })
        }
    }
}

/// Ground truth, noise and input for one rank.
pub struct Instance {
    pub ground_truth: DenseMatrix,
    pub noise: DenseMatrix,
    pub input: DenseMatrix,
}

pub fn build_instance(
    config: &ExperimentConfig,
    base_svd: &Svd,
    rows: usize,
    cols: usize,
    k: usize,
) -> Result<Instance> {
    let ground_truth = truncate(base_svd, rows, cols, k);
    let mut spec = config.noise;
    spec.seed = derive_seed(
        derive_seed(config.seed ^ NOISE_TAG, config.noise.seed),
        k as u64,
    );
    let raw = spec.sample(rows, cols)?;
    let noise = if config.paper_scaling {
        apply_paper_scaling(&raw, &ground_truth)?.noise
    } else {
        raw
    };
    let input = ground_truth.add(&noise)?;
    Ok(Instance {
        ground_truth,
        noise,
        input,
    })
}

/// The instance `run_experiment` uses at rank `k`.
pub fn generate_instance(config: &ExperimentConfig, k: usize) -> Result<Instance> {
    config.validate()?;
    let base = load_base(config)?;
    let (rows, cols) = base.shape();
    config.validate_shape(rows, cols)?;
    build_instance(config, &svd(&base), rows, cols, k)
}

fn run_algorithm(
    algorithm: Algorithm,
    a: &DenseMatrix,
    k: usize,
    eps: f64,
    seed: u64,
) -> Result<(DenseMatrix, usize)> {
    match algorithm {
        Algorithm::Svd => Ok((truncate(&svd(a), a.rows(), a.cols(), k), k)),
        Algorithm::Swz17Style => {
            let fit = cauchy_sketch_l1_lowrank(a, k, seed)?;
            Ok((fit.basis.matmul(&fit.x)?, fit.basis.cols()))
        }
        Algorithm::UniformCss => {
            let sol = uniform_css(a, k, 1, seed)?;
            Ok((sol.reconstruction(a)?, k))
        }
        Algorithm::MedianHeuristic => {
            let fit = median_heuristic(a, k, default_median_group(a.cols(), k), seed)?;
            Ok((fit.b.matmul(&fit.x)?, k))
        }
        Algorithm::NoisyCss => {
            let params = NoisyCssParams::with_defaults(a.cols(), k, eps, seed);
            let sol = noisy_lowrank_approx(a, &params)?;
            let rank = sol.subset.len();
            Ok((sol.reconstruction(a)?, rank))
        }
    }
}

/// Seed of repeat `repeat` of `algorithm` at rank `k`.
pub fn cell_seed(master: u64, algorithm: Algorithm, k: usize, repeat: usize) -> u64 {
    let per_rank = derive_seed(derive_seed(master, CELL_TAG), k as u64);
    derive_seed(derive_seed(per_rank, algorithm.tag()), repeat as u64)
}

/// Runs every `(algorithm, k, repeat)` cell. Configuration and data errors
/// abort; a failing run is recorded in its cell and the rest continue.
/// SVD is deterministic, so it runs once per rank and the result stands
/// for every repeat.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let base = load_base(config)?;
    let (rows, cols) = base.shape();
    config.validate_shape(rows, cols)?;
    let base_svd = svd(&base);
    let mut cells = Vec::new();
    for &k in &config.k_list {
        let inst = build_instance(config, &base_svd, rows, cols, k)?;
        let noise_mass = entrywise_norm(&inst.noise, 1.0)?;
        let noiseless = noise_mass == 0.0;
        let jobs: Vec<(Algorithm, usize)> = config
            .algorithms
            .iter()
            .flat_map(|&alg| {
                let repeats = if alg == Algorithm::Svd {
                    1
                } else {
                    config.repeats
                };
                (0..repeats).map(move |r| (alg, r))
            })
            .collect();
        let outcomes: Vec<Result<RunRecord>> = jobs
            .par_iter()
            .map(|&(alg, r)| {
                let seed = cell_seed(config.seed, alg, k, r);
                let start = Instant::now();
                let (b, output_rank) =
                    run_algorithm(alg, &inst.input, k, config.noisy_css_eps, seed)?;
                let time_ms = start.elapsed().as_secs_f64() * 1e3;
                let cost = entrywise_norm(&b.sub(&inst.input)?, 1.0)?;
                Ok(RunRecord {
                    seed,
                    cost,
                    ratio: (!noiseless).then(|| cost / noise_mass),
                    output_rank,
                    time_ms,
                })
            })
            .collect();
        for &alg in &config.algorithms {
            let mut cell = CellReport {
                algorithm: alg,
                k,
                noise_mass,
                noiseless,
                runs: Vec::new(),
                best_ratio: None,
                best_cost: None,
                errors: Vec::new(),
            };
            for (&(job_alg, _), outcome) in jobs.iter().zip(&outcomes) {
                if job_alg != alg {
                    continue;
                }
                match outcome {
                    Ok(run) => cell.runs.push(run.clone()),
                    Err(e) => {
                        log::warn!("{alg} at k={k} failed: {e}");
                        cell.errors.push(e.to_string());
                    }
                }
            }
            if alg == Algorithm::Svd {
                if let Some(first) = cell.runs.first().cloned() {
                    cell.runs = (0..config.repeats)
                        .map(|r| RunRecord {
                            seed: cell_seed(config.seed, alg, k, r),
                            ..first.clone()
                        })
                        .collect();
                }
            }
            cell.best_cost = cell.runs.iter().map(|r| r.cost).min_by(f64::total_cmp);
            cell.best_ratio = cell
                .runs
                .iter()
                .filter_map(|r| r.ratio)
                .min_by(f64::total_cmp);
            cells.push(cell);
        }
    }
    Ok(ExperimentReport {
        config: config.clone(),
        rows,
        cols,
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::invalid(format!("unknown report format {other:?}"))),
        }
    }
}

pub const CSV_HEADER: [&str; 6] = ["algorithm", "k", "seed", "ratio", "time_ms", "cost"];

/// One row per run. `ratio` is empty for noiseless instances, where `cost`
/// carries the raw value.
pub fn report_to_csv(report: &ExperimentReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).map_err(csv_error)?;
    for cell in &report.cells {
        for run in &cell.runs {
            w.write_record([
                cell.algorithm.name().to_owned(),
                cell.k.to_string(),
                run.seed.to_string(),
                run.ratio.map(|r| r.to_string()).unwrap_or_default(),
                run.time_ms.to_string(),
                run.cost.to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub fn emit_report(
    report: &ExperimentReport,
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<()> {
    let text = match format {
        ReportFormat::Json => serde_json::to_string_pretty(report)?,
        ReportFormat::Csv => report_to_csv(report)?,
    };
    let mut f = File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseFamily;

    fn small_config(scale: f64) -> ExperimentConfig {
        let mut c = ExperimentConfig::synthetic(
            24,
            20,
            vec![2, 3],
            NoiseSpec::new(NoiseFamily::SymmetricStable { alpha: 1.1 }, scale, 3),
            9,
        );
        c.repeats = 2;
        c
    }

    #[test]
    fn config_validation() {
        let mut c = small_config(1.0);
        assert!(c.validate().is_ok());
        c.repeats = 0;
        assert!(c.validate().is_err());
        let mut c = small_config(1.0);
        c.algorithms.clear();
        assert!(c.validate().is_err());
        let mut c = small_config(1.0);
        c.k_list = vec![21];
        assert!(c.validate().is_err());
        let text = serde_json::to_string(&small_config(1.0)).unwrap();
        assert!(text.contains("\"swz17_style\""));
        assert_eq!(
            serde_json::from_str::<ExperimentConfig>(&text).unwrap(),
            small_config(1.0)
        );
    }

    #[test]
    fn runs_every_cell() {
        let report = run_experiment(&small_config(1.0)).unwrap();
        assert_eq!(report.cells.len(), 2 * Algorithm::ALL.len());
        for cell in &report.cells {
            assert!(cell.errors.is_empty(), "{:?}", cell.errors);
            assert_eq!(cell.runs.len(), 2);
            let best = cell.best_ratio.unwrap();
            assert!(best >= 0.0);
            assert_eq!(
                best,
                cell.runs
                    .iter()
                    .filter_map(|r| r.ratio)
                    .fold(f64::INFINITY, f64::min)
            );
        }
        let csv = report_to_csv(&report).unwrap();
        assert_eq!(csv.lines().count(), 1 + 2 * 2 * Algorithm::ALL.len());
        assert!(csv.starts_with("algorithm,k,seed,ratio,time_ms"));
    }

    #[test]
    fn noiseless_reports_raw_costs() {
        let report = run_experiment(&small_config(0.0)).unwrap();
        for cell in &report.cells {
            assert!(cell.noiseless);
            assert!(cell.best_ratio.is_none());
            assert!(cell.best_cost.is_some());
        }
    }

    #[test]
    fn repeats_one_is_the_single_run() {
        let mut c = small_config(1.0);
        c.repeats = 1;
        c.algorithms = vec![Algorithm::UniformCss];
        let report = run_experiment(&c).unwrap();
        let cell = &report.cells[0];
        assert_eq!(cell.best_ratio, cell.runs[0].ratio);
    }

    #[test]
    fn deterministic_modulo_timing() {
        let a = run_experiment(&small_config(1.0)).unwrap();
        let b = run_experiment(&small_config(1.0)).unwrap();
        assert_eq!(a.fingerprint().unwrap(), b.fingerprint().unwrap());
    }

    #[test]
    fn algorithm_names_parse() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("pca".parse::<Algorithm>().is_err());
    }
}
