//! Concentration facts about bounded-moment noise matrices.

use rayon::prelude::*;

use super::{max_of, mean, min_of, slope, LemmaReport};
use crate::error::{Error, Result};
use crate::matrix::{entrywise_norm, pairwise_abs_sum, ColumnSubset, DenseMatrix};
use crate::noise::{sample_bounded_moment_matrix, sample_matrix, NoiseFamily};
use crate::rng::{derive_seed, SeededRng};
use crate::selection::top_indices;

/// Calibrated constant in the heavy-column bound `|H| ≤ C·n^{1−(p−1)/2}`.
pub const HEAVY_CONSTANT: f64 = 10.0;
/// Calibrated constant in the subset mass bound `≤ C·ε·n²`.
pub const SUBSET_MASS_CONSTANT: f64 = 10.0;
/// Slack added to `1/p` when judging the averaging slope.
const SLOPE_SLACK: f64 = 0.1;
const AVERAGING_REPEATS: usize = 4;
const MAX_REJECTIONS: u64 = 10_000;

/// Entry size above which a noise column counts as heavy: `n^{1/2 + 1/(2p)}`.
pub fn heavy_threshold(n: usize, p: f64) -> f64 {
    (n as f64).powf(0.5 + 0.5 / p)
}

fn check_common(n: usize, p: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    NoiseFamily::BoundedMoment { p }.validate()
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "accuracy must lie in (0, 1], got {eps}"
        )))
    }
}

/// Per trial, checks `‖Δ‖₁ ≥ (1−ε)·n²` for an `n × n` bounded-moment matrix.
pub fn check_noise_lower_bound(
    n: usize,
    p: f64,
    eps: f64,
    trials: usize,
    seed: u64,
) -> Result<LemmaReport> {
    check_common(n, p)?;
    check_eps(eps)?;
    let n2 = (n * n) as f64;
    let ratios = (0..trials)
        .into_par_iter()
        .map(|t| {
            let delta = sample_bounded_moment_matrix(n, n, p, derive_seed(seed, t as u64))?;
            Ok(entrywise_norm(&delta, 1.0)? / n2)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut report = LemmaReport::new("noise_lower_bound", seed);
    for &r in &ratios {
        report.record(r >= 1.0 - eps);
    }
    report.stat("threshold", 1.0 - eps);
    report.stat("mean_ratio", mean(&ratios));
    report.stat("min_ratio", min_of(&ratios));
    report.stat("max_ratio", max_of(&ratios));
    report.finish()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AveragingCoefficients {
    /// Independent uniform draws from `[-1, 1]`.
    Uniform,
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AveragingMode {
    Unconditional,
    /// Vectors with an entry above [`heavy_threshold`] are redrawn.
    Conditioned,
}

impl AveragingMode {
    fn label(self) -> &'static str {
        match self {
            AveragingMode::Unconditional => "unconditional",
            AveragingMode::Conditioned => "conditioned",
        }
    }
}

fn draw_vector(n: usize, p: f64, seed: u64, limit: Option<f64>) -> Result<(Vec<f64>, u64)> {
    let family = NoiseFamily::BoundedMoment { p };
    for attempt in 0..MAX_REJECTIONS {
        let v = sample_matrix(family, 1, n, derive_seed(seed, attempt))?.into_data();
        match limit {
            Some(l) if v.iter().any(|x| x.abs() > l) => continue,
            _ => return Ok((v, attempt)),
        }
    }
    Err(Error::solver(format!(
        "no admissible vector after {MAX_REJECTIONS} draws"
    )))
}

fn powers_of_two(t_max: usize) -> Vec<usize> {
    std::iter::successors(Some(1usize), |&t| t.checked_mul(2))
        .take_while(|&t| t <= t_max)
        .collect()
}

/// Records `‖Σ_{i≤t} α_i Δ_i‖₁ / n` for `t = 1, 2, 4, … ≤ t_max` (averaged
/// over a few independent repeats) and checks that the log-log slope against
/// `t` is at most `1/p + 0.1`.
pub fn check_averaging_with(
    n: usize,
    t_max: usize,
    p: f64,
    coefficients: AveragingCoefficients,
    mode: AveragingMode,
    seed: u64,
) -> Result<LemmaReport> {
    check_common(n, p)?;
    if t_max == 0 {
        return Err(Error::invalid("need at least one vector"));
    }
    if let AveragingCoefficients::Constant(c) = coefficients {
        if !(-1.0..=1.0).contains(&c) {
            return Err(Error::invalid(format!("coefficient {c} outside [-1, 1]")));
        }
    }
    let ts = powers_of_two(t_max);
    let t_last = *ts.last().expect("t_max >= 1");
    let limit = (mode == AveragingMode::Conditioned).then(|| heavy_threshold(n, p));
    let per_repeat = (0..AVERAGING_REPEATS)
        .into_par_iter()
        .map(|r| {
            let repeat_seed = derive_seed(seed, r as u64);
            let mut alpha_rng = SeededRng::new(derive_seed(repeat_seed, u64::MAX));
            let mut sum = vec![0.0; n];
            let mut norms = Vec::with_capacity(ts.len());
            let mut rejections = 0;
            let mut next = 0;
            for i in 0..t_last {
                let (v, rejected) = draw_vector(n, p, derive_seed(repeat_seed, i as u64), limit)?;
                rejections += rejected;
                let a = match coefficients {
                    AveragingCoefficients::Uniform => alpha_rng.uniform_range(-1.0, 1.0),
                    AveragingCoefficients::Constant(c) => c,
                };
                for (s, x) in sum.iter_mut().zip(&v) {
                    *s += a * x;
                }
                if i + 1 == ts[next] {
                    norms.push(pairwise_abs_sum(&sum) / n as f64);
                    next += 1;
                }
            }
            Ok((norms, rejections))
        })
        .collect::<Result<Vec<_>>>()?;

    let means: Vec<f64> = (0..ts.len())
        .map(|k| {
            mean(
                &per_repeat
                    .iter()
                    .map(|(norms, _)| norms[k])
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let bound = 1.0 / p + SLOPE_SLACK;
    let fitted = if ts.len() < 2 || means.iter().any(|&m| m <= 0.0) {
        0.0
    } else {
        let xs: Vec<f64> = ts.iter().map(|&t| (t as f64).ln()).collect();
        let ys: Vec<f64> = means.iter().map(|m| m.ln()).collect();
        slope(&xs, &ys)
    };
    let mut report = LemmaReport::new(format!("averaging_{}", mode.label()), seed);
    report.record(fitted <= bound);
    for (t, m) in ts.iter().zip(&means) {
        report.stat(&format!("norm_t{t:03}"), *m);
    }
    report.stat("slope", fitted);
    report.stat("slope_bound", bound);
    report.stat(
        "rejections",
        per_repeat.iter().map(|(_, r)| *r as f64).sum(),
    );
    report.finish()
}

/// Runs [`check_averaging_with`] with uniform coefficients in both modes and
/// merges the two into one report with prefixed statistics.
pub fn check_averaging(n: usize, t_max: usize, p: f64, seed: u64) -> Result<LemmaReport> {
    let mut report = LemmaReport::new("averaging", seed);
    for mode in [AveragingMode::Unconditional, AveragingMode::Conditioned] {
        let part = check_averaging_with(n, t_max, p, AveragingCoefficients::Uniform, mode, seed)?;
        report.record(part.all_passed());
        for (name, v) in part.statistics {
            report.stat(&format!("{}.{name}", mode.label()), v);
        }
    }
    report.finish()
}

/// Columns of `delta` containing an entry above [`heavy_threshold`].
pub fn heavy_columns(delta: &DenseMatrix, p: f64) -> ColumnSubset {
    let limit = heavy_threshold(delta.rows(), p);
    let mut heavy = vec![false; delta.cols()];
    for i in 0..delta.rows() {
        for (j, v) in delta.row(i).iter().enumerate() {
            heavy[j] |= v.abs() > limit;
        }
    }
    ColumnSubset::from_unsorted_dedup((0..delta.cols()).filter(|&j| heavy[j]).collect())
}

/// Counts heavy columns of an `n × n` bounded-moment matrix and checks the
/// count against `C·n^{1−(p−1)/2}` with `C = 10`.
pub fn count_heavy_columns(n: usize, p: f64, seed: u64) -> Result<LemmaReport> {
    check_common(n, p)?;
    let delta = sample_bounded_moment_matrix(n, n, p, seed)?;
    let count = heavy_columns(&delta, p).len() as f64;
    let bound = HEAVY_CONSTANT * (n as f64).powf(1.0 - (p - 1.0) / 2.0);
    let mut report = LemmaReport::new("heavy_columns", seed);
    report.record(count <= bound);
    report.stat("heavy_columns", count);
    report.stat("bound", bound);
    report.stat("constant", HEAVY_CONSTANT);
    report.stat("threshold", heavy_threshold(n, p));
    report.finish()
}

/// Largest total `ℓ1` mass of any `size` columns of `delta`.
pub fn worst_subset_mass(delta: &DenseMatrix, size: usize) -> f64 {
    let masses: Vec<f64> = delta
        .columns()
        .iter()
        .map(|c| pairwise_abs_sum(c))
        .collect();
    let top = top_indices(&masses, size.min(masses.len()));
    pairwise_abs_sum(&top.indices().iter().map(|&j| masses[j]).collect::<Vec<_>>())
}

/// Takes the `n/r` heaviest columns, `r = ⌈(1/ε)^{1+1/(p−1)}⌉`, and checks
/// their mass against `C·ε·n²` with `C = 10`.
pub fn check_subset_mass(n: usize, p: f64, eps: f64, seed: u64) -> Result<LemmaReport> {
    check_common(n, p)?;
    check_eps(eps)?;
    let r = (1.0 / eps).powf(1.0 + 1.0 / (p - 1.0)).ceil().max(1.0);
    let size = (n as f64 / r).floor() as usize;
    let delta = sample_bounded_moment_matrix(n, n, p, seed)?;
    let mass = worst_subset_mass(&delta, size);
    let n2 = (n * n) as f64;
    let bound = SUBSET_MASS_CONSTANT * eps * n2;
    let mut report = LemmaReport::new("subset_mass", seed);
    report.record(mass <= bound);
    report.stat("subset_size", size as f64);
    report.stat("mass", mass);
    report.stat("mass_over_n2", mass / n2);
    report.stat("bound", bound);
    report.stat("constant", SUBSET_MASS_CONSTANT);
    report.finish()
}

/// `‖column‖₁ ≤ (1+ε)·len`.
pub fn good_column_bound_holds(column: &[f64], eps: f64) -> bool {
    pairwise_abs_sum(column) <= (1.0 + eps) * column.len() as f64
}

/// Rejection-samples `columns` length-`n` vectors without heavy entries and
/// checks each against `‖Δ‖₁ ≤ (1+ε)·n`.
pub fn check_good_column_norm(
    n: usize,
    p: f64,
    eps: f64,
    columns: usize,
    seed: u64,
) -> Result<LemmaReport> {
    check_common(n, p)?;
    check_eps(eps)?;
    let limit = heavy_threshold(n, p);
    let draws = (0..columns)
        .into_par_iter()
        .map(|j| draw_vector(n, p, derive_seed(seed, j as u64), Some(limit)))
        .collect::<Result<Vec<_>>>()?;
    let mut report = LemmaReport::new("good_column_norm", seed);
    let mut ratios = Vec::with_capacity(columns);
    for (v, _) in &draws {
        report.record(good_column_bound_holds(v, eps));
        ratios.push(pairwise_abs_sum(v) / n as f64);
    }
    report.stat("bound_ratio", 1.0 + eps);
    report.stat("mean_ratio", mean(&ratios));
    report.stat(
        "max_ratio",
        if ratios.is_empty() {
            0.0
        } else {
            max_of(&ratios)
        },
    );
    report.stat("rejections", draws.iter().map(|(_, r)| *r as f64).sum());
    report.finish()
}
