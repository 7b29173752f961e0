//! Column subset selection: the noisy `(1+ε)` algorithm, uniform sampling,
//! a bicriteria subroutine and the median heuristic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{pairwise_abs_sum, residual_l1, select_columns, ColumnSubset, DenseMatrix};
use crate::regression::{
    fit_columns, fit_columns_from, l1_regression_exact, MultiFit, EXACT_SIZE_CAP,
};
use crate::rng::{derive_seed, SeededRng};

/// Accuracy used for the final fits of the baseline selectors.
pub const DEFAULT_FIT_EPS: f64 = 0.01;
/// Rounds draw `BICRITERIA_FACTOR · k` columns each.
pub const BICRITERIA_FACTOR: usize = 2;
/// A candidate is pruned when dropping it raises the sampled fitting cost by
/// less than this fraction.
const PRUNE_TOL: f64 = 1e-9;
const PRUNE_MAX_TARGETS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisyCssParams {
    pub k: usize,
    pub eps: f64,
    /// Size of the initial uniform sample.
    pub s: usize,
    /// Number of worst-fit columns handed to the bicriteria step.
    pub l: usize,
    pub seed: u64,
}

impl NoisyCssParams {
    /// `s = min(n, 10·k·⌈1/ε⌉)` and `l = ⌈ε·n / (4·k·max(1, ln k))⌉`.
    pub fn with_defaults(n: usize, k: usize, eps: f64, seed: u64) -> Self {
        Self {
            k,
            eps,
            s: default_sample_size(n, k, eps),
            l: default_top_count(n, k, eps),
            seed,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::invalid(format!(
                "accuracy must lie in (0, 1), got {}",
                self.eps
            )));
        }
        if self.k < 1 || self.k > self.s || self.s > n {
            return Err(Error::invalid(format!(
                "need 1 <= k <= s <= n, got k={}, s={}, n={n}",
                self.k, self.s
            )));
        }
        if self.l > n {
            return Err(Error::invalid(format!(
                "top count {} exceeds {n} columns",
                self.l
            )));
        }
        Ok(())
    }
}

pub fn default_sample_size(n: usize, k: usize, eps: f64) -> usize {
    n.min(10 * k * (1.0 / eps).ceil() as usize)
}

pub fn default_top_count(n: usize, k: usize, eps: f64) -> usize {
    let denom = 4.0 * k as f64 * (k as f64).ln().max(1.0);
    ((eps * n as f64 / denom).ceil() as usize).min(n)
}

/// Median heuristic group size `min(50, ⌊cols/k⌋)`.
pub fn default_median_group(cols: usize, k: usize) -> usize {
    50.min(cols / k.max(1))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CssDiagnostics {
    pub sample_size: usize,
    pub top_count: usize,
    pub bicriteria_size: usize,
    pub subset_size: usize,
    /// Exact cost of fitting every column onto the initial sample.
    pub sample_fit_cost: f64,
    pub sample_fit_estimate: f64,
    /// Joint fit onto the union, as returned.
    pub joint_cost: f64,
    /// The split used in the analysis: columns outside the top set fit onto
    /// the initial sample, top columns fit onto the bicriteria subset only.
    pub split_cost: f64,
    /// `|S| = n`, so the fit is the identity.
    pub degenerate: bool,
    pub unconverged_columns: usize,
    pub failed_columns: usize,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CssSolution {
    pub subset: ColumnSubset,
    /// `|subset| × cols`.
    pub x: DenseMatrix,
    /// Exact `‖A_S X − A‖₁`.
    pub cost: f64,
    /// Sum of the per-column certified estimates.
    pub estimate: f64,
    pub diagnostics: CssDiagnostics,
}

impl CssSolution {
    pub fn reconstruction(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        select_columns(a, &self.subset)?.matmul(&self.x)
    }

    fn identity(a: &DenseMatrix, mut diagnostics: CssDiagnostics) -> Self {
        let n = a.cols();
        diagnostics.degenerate = true;
        diagnostics.subset_size = n;
        Self {
            subset: ColumnSubset::all(n),
            x: DenseMatrix::identity(n),
            cost: 0.0,
            estimate: 0.0,
            diagnostics,
        }
    }
}

/// For each column of `a`, its position inside `subset` if it belongs to it.
fn unit_hints(subset: &ColumnSubset, cols: usize) -> Vec<Option<usize>> {
    (0..cols).map(|j| subset.position(j)).collect()
}

fn fit_subset(a: &DenseMatrix, subset: &ColumnSubset, eps: f64) -> Result<MultiFit> {
    let design = select_columns(a, subset)?;
    fit_columns(&design, a, eps, &unit_hints(subset, a.cols()))
}

/// Best of `trials` uniformly drawn `k`-column subsets.
pub fn uniform_css(a: &DenseMatrix, k: usize, trials: usize, seed: u64) -> Result<CssSolution> {
    uniform_css_with(a, k, trials, DEFAULT_FIT_EPS, seed)
}

pub fn uniform_css_with(
    a: &DenseMatrix,
    k: usize,
    trials: usize,
    eps: f64,
    seed: u64,
) -> Result<CssSolution> {
    let n = a.cols();
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds {n} columns")));
    }
    if trials == 0 {
        return Err(Error::invalid("at least one trial is required"));
    }
    let mut rng = SeededRng::new(seed);
    let mut best: Option<CssSolution> = None;
    for _ in 0..trials {
        let subset = ColumnSubset::from_unsorted_dedup(rng.sample_without_replacement(n, k));
        let fit = fit_subset(a, &subset, eps)?;
        if best.as_ref().is_some_and(|b| b.cost <= fit.cost) {
            continue;
        }
        let diagnostics = CssDiagnostics {
            sample_size: k,
            subset_size: k,
            joint_cost: fit.cost,
            sample_fit_cost: fit.cost,
            sample_fit_estimate: fit.estimate,
            unconverged_columns: fit.unconverged.len(),
            failed_columns: fit.failures.len(),
            trials,
            ..CssDiagnostics::default()
        };
        best = Some(CssSolution {
            subset,
            x: fit.x,
            cost: fit.cost,
            estimate: fit.estimate,
            diagnostics,
        });
    }
    Ok(best.expect("trials >= 1"))
}

/// Small-sample exact fitting cost used to prune bicriteria candidates.
struct PruneOracle {
    block: DenseMatrix,
    targets: Vec<Vec<f64>>,
    scale: f64,
}

impl PruneOracle {
    fn new(a: &DenseMatrix, candidates: usize, rng: &mut SeededRng) -> Self {
        let rows_wanted = (4 * candidates + 8)
            .min(EXACT_SIZE_CAP / candidates.max(1))
            .min(a.rows());
        let mut rows =
            rng.sample_without_replacement(a.rows(), rows_wanted.max(candidates.min(a.rows())));
        rows.sort_unstable();
        let block = a.select_rows(&rows).expect("sampled rows are in range");
        let target_count = PRUNE_MAX_TARGETS.min(a.cols());
        let mut cols = rng.sample_without_replacement(a.cols(), target_count);
        cols.sort_unstable();
        let targets: Vec<Vec<f64>> = cols.iter().map(|&j| block.column(j)).collect();
        let scale = targets.iter().map(|t| pairwise_abs_sum(t)).sum();
        Self {
            block,
            targets,
            scale,
        }
    }

    fn cost(&self, subset: &[usize]) -> Result<f64> {
        let design = self.block.gather_columns(subset)?;
        if design.cols() > design.rows() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for t in &self.targets {
            total += l1_regression_exact(&design, t)?.cost;
        }
        Ok(total)
    }
}

/// Bicriteria column selection with the default round size `2k`.
pub fn bicriteria_css(a: &DenseMatrix, k: usize, seed: u64) -> Result<ColumnSubset> {
    bicriteria_css_with(a, k, BICRITERIA_FACTOR, seed)
}

/// `⌈log₂ n⌉` rounds of `factor·k` uniform columns, merged, then greedily
/// pruned: in ascending index order, a column is dropped when removing it
/// raises the exact fitting cost on a row and column sample by less than a
/// `1e-9` fraction of that cost (or of the sampled target mass, if larger). The result never exceeds `factor·k·⌈log₂ n⌉` columns.
pub fn bicriteria_css_with(
    a: &DenseMatrix,
    k: usize,
    factor: usize,
    seed: u64,
) -> Result<ColumnSubset> {
    let n = a.cols();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("need 1 <= k <= {n}, got {k}")));
    }
    if factor == 0 {
        return Err(Error::invalid("round size factor must be positive"));
    }
    if n <= k {
        return Ok(ColumnSubset::all(n));
    }
    let rounds = (usize::BITS - (n - 1).leading_zeros()) as usize;
    let per_round = (factor * k).min(n);
    let mut rng = SeededRng::new(seed);
    let mut union = Vec::new();
    for _ in 0..rounds {
        union.extend(rng.sample_without_replacement(n, per_round));
    }
    let candidates = ColumnSubset::from_unsorted_dedup(union);
    if candidates.len() <= 1 {
        return Ok(candidates);
    }
    let oracle = PruneOracle::new(a, candidates.len(), &mut rng);
    let mut kept: Vec<usize> = candidates.indices().to_vec();
    let mut current = oracle.cost(&kept)?;
    for &c in candidates.indices() {
        if kept.len() <= 1 {
            break;
        }
        let trial: Vec<usize> = kept.iter().copied().filter(|&j| j != c).collect();
        let cost = oracle.cost(&trial)?;
        if cost - current < PRUNE_TOL * current.max(oracle.scale) {
            kept = trial;
            current = cost;
        }
    }
    ColumnSubset::new(kept)
}

/// Indices of the `l` largest values; ties prefer the lower index.
pub fn top_indices(values: &[f64], l: usize) -> ColumnSubset {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    order.truncate(l);
    ColumnSubset::from_unsorted_dedup(order)
}

/// The noisy column subset selection algorithm.
///
/// 1. Draw a uniform sample `I` of `s` columns without replacement.
/// 2. Fit every column of `A` onto `A_I`, giving estimates `vᵢ`.
/// 3. Let `T` be the `l` columns with the largest estimates.
/// 4. Run bicriteria selection on `A_T` with rank `k`, giving `Q`.
/// 5. Fit every column of `A` onto `A_{I∪Q}`.
///
/// Step 5 is warm-started from the step-2 coefficients, which are feasible
/// for the larger design, and a column keeps its step-2 fit when that is
/// cheaper.
pub fn noisy_lowrank_approx(a: &DenseMatrix, params: &NoisyCssParams) -> Result<CssSolution> {
    let n = a.cols();
    params.validate(n)?;
    let mut diag = CssDiagnostics {
        sample_size: params.s,
        top_count: params.l,
        trials: 1,
        ..CssDiagnostics::default()
    };
    if params.s >= n {
        log::debug!("sample covers all {n} columns; returning the identity fit");
        return Ok(CssSolution::identity(a, diag));
    }
    let mut rng = SeededRng::new(derive_seed(params.seed, 1));
    let sample = ColumnSubset::new(rng.sample_without_replacement(n, params.s))?;

    let step2 = fit_subset(a, &sample, params.eps)?;
    diag.sample_fit_cost = step2.cost;
    diag.sample_fit_estimate = step2.estimate;

    let top = top_indices(&step2.per_column_estimate, params.l);
    let bicriteria = if top.is_empty() {
        ColumnSubset::empty()
    } else {
        let a_top = select_columns(a, &top)?;
        let local = bicriteria_css(&a_top, params.k.min(top.len()), derive_seed(params.seed, 2))?;
        top.compose(&local)?
    };
    diag.bicriteria_size = bicriteria.len();

    let subset = sample.union(&bicriteria);
    diag.subset_size = subset.len();
    if subset.len() >= n {
        return Ok(CssSolution::identity(a, diag));
    }

    diag.split_cost = split_cost(a, &step2, &top, &bicriteria, params.eps)?;

    let fit = if subset.len() == sample.len() {
        step2
    } else {
        let row_map: Vec<usize> = sample
            .indices()
            .iter()
            .map(|&j| subset.position(j).expect("sample is inside the union"))
            .collect();
        let mut start = vec![0.0; subset.len() * n];
        for (l, &target) in row_map.iter().enumerate() {
            start[target * n..(target + 1) * n].copy_from_slice(step2.x.row(l));
        }
        let start = DenseMatrix::new(subset.len(), n, start)?;
        let design = select_columns(a, &subset)?;
        let mut joint = fit_columns_from(&design, a, params.eps, &unit_hints(&subset, n), &start)?;
        joint.take_cheaper(&step2, &row_map);
        joint
    };
    diag.joint_cost = fit.cost;
    diag.unconverged_columns = fit.unconverged.len();
    diag.failed_columns = fit.failures.len();
    if !fit.failures.is_empty() {
        log::warn!("{} column fits failed", fit.failures.len());
    }
    let x = fit.x;
    let a_s = select_columns(a, &subset)?;
    let cost = residual_l1(&a_s, &x, a)?;
    Ok(CssSolution {
        subset,
        x,
        cost,
        estimate: fit.estimate,
        diagnostics: diag,
    })
}

/// Columns outside `top` keep their sample fit; columns in `top` are refit
/// onto the bicriteria subset alone.
fn split_cost(
    a: &DenseMatrix,
    step2: &MultiFit,
    top: &ColumnSubset,
    q: &ColumnSubset,
    eps: f64,
) -> Result<f64> {
    let outside: f64 = (0..a.cols())
        .filter(|j| !top.contains(*j))
        .map(|j| step2.per_column_cost[j])
        .sum();
    if top.is_empty() {
        return Ok(outside);
    }
    let a_top = select_columns(a, top)?;
    let inside = if q.is_empty() {
        pairwise_abs_sum(a_top.data())
    } else {
        let design = select_columns(a, q)?;
        let hints: Vec<Option<usize>> = top.indices().iter().map(|&j| q.position(j)).collect();
        fit_columns(&design, &a_top, eps, &hints)?.cost
    };
    Ok(outside + inside)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianFit {
    /// `rows × k` factor of entrywise group medians.
    pub b: DenseMatrix,
    /// `k × cols`.
    pub x: DenseMatrix,
    /// Sampled column indices in draw order; group `q` is
    /// `sampled[q·s .. (q+1)·s]`.
    pub sampled: Vec<usize>,
    /// Exact `‖BX − A‖₁`.
    pub cost: f64,
    pub estimate: f64,
}

/// Median of a non-empty slice; for an even count, the mean of the two
/// middle order statistics.
pub fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    assert!(n > 0, "median of an empty slice");
    let mid = n / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Median heuristic with `s` columns per factor column.
pub fn median_heuristic(a: &DenseMatrix, k: usize, s: usize, seed: u64) -> Result<MedianFit> {
    median_heuristic_with(a, k, s, DEFAULT_FIT_EPS, seed)
}

pub fn median_heuristic_with(
    a: &DenseMatrix,
    k: usize,
    s: usize,
    eps: f64,
    seed: u64,
) -> Result<MedianFit> {
    let (rows, cols) = a.shape();
    if k == 0 || s == 0 {
        return Err(Error::invalid("k and s must be positive"));
    }
    if s * k > cols {
        return Err(Error::invalid(format!(
            "s·k = {} exceeds {cols} columns",
            s * k
        )));
    }
    let mut rng = SeededRng::new(seed);
    let sampled = rng.sample_without_replacement(cols, s * k);
    let mut data = vec![0.0; rows * k];
    let mut group = vec![0.0; s];
    for t in 0..rows {
        let row = a.row(t);
        for q in 0..k {
            for (g, &j) in group.iter_mut().zip(&sampled[q * s..(q + 1) * s]) {
                *g = row[j];
            }
            data[t * k + q] = median(&mut group);
        }
    }
    let b = DenseMatrix::new(rows, k, data)?;
    let fit = fit_columns(&b, a, eps, &[])?;
    let cost = residual_l1(&b, &fit.x, a)?;
    Ok(MedianFit {
        b,
        x: fit.x,
        sampled,
        cost,
        estimate: fit.estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::sample_cauchy_matrix;

    fn rank_k(n: usize, d: usize, k: usize, seed: u64) -> DenseMatrix {
        let u = sample_cauchy_matrix(n, k, seed)
            .unwrap()
            .map(|v| v.clamp(-5.0, 5.0))
            .unwrap();
        let v = sample_cauchy_matrix(k, d, seed + 1)
            .unwrap()
            .map(|v| v.clamp(-5.0, 5.0))
            .unwrap();
        u.matmul(&v).unwrap()
    }

    #[test]
    fn defaults() {
        assert_eq!(default_sample_size(300, 5, 0.1), 300);
        assert_eq!(default_sample_size(300, 5, 0.25), 200);
        assert_eq!(default_sample_size(300, 5, 0.5), 100);
        assert_eq!(default_top_count(300, 5, 0.5), 5);
        assert_eq!(default_top_count(200, 1, 0.25), 13);
        assert_eq!(default_median_group(200, 5), 40);
        assert_eq!(default_median_group(200, 20), 10);
        assert_eq!(default_median_group(1000, 5), 50);
    }

    #[test]
    fn top_indices_tie_break() {
        let t = top_indices(&[1.0, 3.0, 3.0, 2.0, 3.0], 2);
        assert_eq!(t.indices(), &[1, 2]);
        assert!(top_indices(&[1.0, 2.0], 0).is_empty());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&mut [7.0]), 7.0);
    }

    #[test]
    fn uniform_css_full_subset() {
        let a = rank_k(15, 6, 2, 3);
        let sol = uniform_css(&a, 6, 1, 0).unwrap();
        assert_eq!(sol.subset, ColumnSubset::all(6));
        assert!(sol.cost < 1e-9);
        assert!(uniform_css(&a, 7, 1, 0).is_err());
        assert!(uniform_css(&a, 2, 0, 0).is_err());
    }

    #[test]
    fn bicriteria_edge_cases() {
        let a = rank_k(10, 3, 2, 5);
        assert_eq!(bicriteria_css(&a, 3, 0).unwrap(), ColumnSubset::all(3));
        let col: Vec<f64> = (0..8).map(|i| i as f64 - 3.5).collect();
        let rep = DenseMatrix::from_columns(8, &vec![col; 6]).unwrap();
        let s = bicriteria_css(&rep, 1, 9).unwrap();
        assert_eq!(s.len(), 1);
        let fit = fit_subset(&rep, &s, 0.1).unwrap();
        assert!(fit.cost < 1e-9);
    }

    #[test]
    fn bicriteria_recovers_noiseless_span() {
        for seed in 0..5 {
            let a = rank_k(40, 30, 3, 10 + seed);
            let s = bicriteria_css(&a, 3, seed).unwrap();
            assert!(s.len() <= 2 * 3 * 5);
            let fit = fit_subset(&a, &s, 0.1).unwrap();
            assert!(
                fit.cost <= 1e-8 * pairwise_abs_sum(a.data()),
                "seed {seed}: {}",
                fit.cost
            );
        }
    }

    #[test]
    fn noisy_css_noiseless_recovers_span() {
        let a = rank_k(60, 80, 2, 21);
        let params = NoisyCssParams::with_defaults(80, 2, 0.5, 4);
        let sol = noisy_lowrank_approx(&a, &params).unwrap();
        assert!(sol.cost <= 0.5 * pairwise_abs_sum(a.data()) * 1e-6);
    }

    #[test]
    fn noisy_css_without_top_set_equals_sample_fit() {
        let a = rank_k(30, 40, 2, 1)
            .add(&sample_cauchy_matrix(30, 40, 2).unwrap())
            .unwrap();
        let params = NoisyCssParams {
            k: 2,
            eps: 0.5,
            s: 10,
            l: 0,
            seed: 3,
        };
        let sol = noisy_lowrank_approx(&a, &params).unwrap();
        assert_eq!(sol.subset.len(), 10);
        assert!((sol.diagnostics.joint_cost - sol.diagnostics.sample_fit_cost).abs() < 1e-12);
    }

    #[test]
    fn noisy_css_is_no_worse_than_sample_fit() {
        let a = rank_k(40, 60, 3, 7)
            .add(&sample_cauchy_matrix(40, 60, 8).unwrap())
            .unwrap();
        let params = NoisyCssParams {
            k: 3,
            eps: 0.5,
            s: 12,
            l: 10,
            seed: 5,
        };
        let sol = noisy_lowrank_approx(&a, &params).unwrap();
        assert!(sol.diagnostics.joint_cost <= sol.diagnostics.sample_fit_cost);
        assert!(sol.subset.len() <= params.s + sol.diagnostics.bicriteria_size);
        let again = noisy_lowrank_approx(&a, &params).unwrap();
        assert_eq!(sol, again);
    }

    #[test]
    fn noisy_css_degenerates_to_identity() {
        let a = rank_k(10, 12, 2, 0);
        let sol = noisy_lowrank_approx(&a, &NoisyCssParams::with_defaults(12, 2, 0.5, 0)).unwrap();
        assert!(sol.diagnostics.degenerate);
        assert_eq!(sol.cost, 0.0);
        assert_eq!(sol.x, DenseMatrix::identity(12));
    }

    #[test]
    fn params_validation() {
        let p = NoisyCssParams {
            k: 3,
            eps: 0.5,
            s: 2,
            l: 0,
            seed: 0,
        };
        assert!(p.validate(10).is_err());
        let p = NoisyCssParams {
            k: 1,
            eps: 1.0,
            s: 2,
            l: 0,
            seed: 0,
        };
        assert!(p.validate(10).is_err());
        let p = NoisyCssParams {
            k: 1,
            eps: 0.5,
            s: 2,
            l: 11,
            seed: 0,
        };
        assert!(p.validate(10).is_err());
    }

    #[test]
    fn median_heuristic_examples() {
        let a = rank_k(12, 20, 3, 4);
        let m = median_heuristic(&a, 3, 1, 8).unwrap();
        for q in 0..3 {
            assert_eq!(m.b.column(q), a.column(m.sampled[q]));
        }
        let col: Vec<f64> = (0..6).map(|i| (i * i) as f64 - 4.0).collect();
        let same = DenseMatrix::from_columns(6, &vec![col.clone(); 5]).unwrap();
        let m = median_heuristic(&same, 1, 5, 0).unwrap();
        assert_eq!(m.b.column(0), col);
        assert!(m.cost < 1e-9);
        assert!(median_heuristic(&a, 3, 7, 0).is_err());
    }

    #[test]
    fn median_heuristic_even_group_matches_sort_oracle() {
        let a = sample_cauchy_matrix(9, 24, 13).unwrap();
        let (k, s) = (3, 4);
        let m = median_heuristic(&a, k, s, 2).unwrap();
        for t in 0..9 {
            for q in 0..k {
                let mut g: Vec<f64> = m.sampled[q * s..(q + 1) * s]
                    .iter()
                    .map(|&j| a.get(t, j))
                    .collect();
                g.sort_by(f64::total_cmp);
                assert_eq!(m.b.get(t, q), 0.5 * (g[1] + g[2]));
            }
        }
    }
}
