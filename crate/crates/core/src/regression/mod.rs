//! Least-absolute-deviations regression.

mod exact;
mod irls;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use exact::{l1_regression_exact, EXACT_SIZE_CAP};
pub use irls::{IrlsOptions, IrlsTrace, L1Design, LevelTrace};

use crate::error::{Error, Result};
use crate::matrix::{pairwise_abs_sum, DenseMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub x: Vec<f64>,
    /// `‖Mx − b‖₁`, recomputed from `x`.
    pub cost: f64,
    /// Certified value with `cost ≤ estimate ≤ (1+ε)·cost`.
    pub estimate: f64,
    /// False when the solver could not certify a `(1+ε)` gap; `estimate`
    /// is then `cost·(1+ε)`.
    pub converged: bool,
}

impl RegressionResult {
    pub(crate) fn exact(x: Vec<f64>, cost: f64) -> Self {
        Self {
            x,
            cost,
            estimate: cost,
            converged: true,
        }
    }
}

pub(crate) fn check_shapes(m: &DenseMatrix, b: &[f64]) -> Result<()> {
    if m.rows() != b.len() {
        return Err(Error::invalid(format!(
            "design has {} rows but target has length {}",
            m.rows(),
            b.len()
        )));
    }
    if let Some(v) = b.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite target entry {v}")));
    }
    Ok(())
}

/// `‖b − Mx‖₁` with pairwise summation.
pub fn residual_cost(m: &DenseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let r: Vec<f64> = (0..m.rows())
        .map(|i| b[i] - m.row(i).iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
        .collect();
    pairwise_abs_sum(&r)
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "accuracy must lie in (0, 1), got {eps}"
        )))
    }
}

/// `(1+ε)`-approximate fit by IRLS with a certified estimate.
pub fn l1_regression_approx(m: &DenseMatrix, b: &[f64], eps: f64) -> Result<RegressionResult> {
    check_eps(eps)?;
    check_shapes(m, b)?;
    L1Design::new(m).solve(b, eps)
}

/// One fit per column of `targets`; a failing column does not affect the
/// others. Columns are solved in parallel, results are in column order.
pub fn l1_regression_multi(
    m: &DenseMatrix,
    targets: &DenseMatrix,
    eps: f64,
) -> Result<Vec<Result<RegressionResult>>> {
    check_eps(eps)?;
    if m.rows() != targets.rows() {
        return Err(Error::invalid(format!(
            "design has {} rows, targets have {}",
            m.rows(),
            targets.rows()
        )));
    }
    let design = L1Design::new(m);
    let columns = targets.columns();
    Ok(columns.par_iter().map(|b| design.solve(b, eps)).collect())
}

/// All columns of a multi-target fit assembled into one coefficient matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiFit {
    /// `design.cols × targets.cols`.
    pub x: DenseMatrix,
    pub per_column_cost: Vec<f64>,
    pub per_column_estimate: Vec<f64>,
    pub cost: f64,
    pub estimate: f64,
    /// Columns whose gap could not be certified.
    pub unconverged: Vec<usize>,
    /// Columns whose solve failed; they fall back to a zero coefficient vector.
    pub failures: Vec<(usize, String)>,
}

/// Fits every column of `targets` onto `m`.
///
/// `unit_hint[j] = Some(p)` says target column `j` is identical to design
/// column `p`; that column gets the exact coefficient vector `e_p` instead of
/// an iterative solve. Pass an empty slice for no hints.
pub fn fit_columns(
    m: &DenseMatrix,
    targets: &DenseMatrix,
    eps: f64,
    unit_hint: &[Option<usize>],
) -> Result<MultiFit> {
    fit_columns_impl(m, targets, eps, unit_hint, None)
}

/// [`fit_columns`] with column `j` warm-started from column `j` of `start`
/// (`m.cols × targets.cols`).
pub fn fit_columns_from(
    m: &DenseMatrix,
    targets: &DenseMatrix,
    eps: f64,
    unit_hint: &[Option<usize>],
    start: &DenseMatrix,
) -> Result<MultiFit> {
    if start.shape() != (m.cols(), targets.cols()) {
        return Err(Error::invalid(format!(
            "warm start shape {:?} does not match {}x{}",
            start.shape(),
            m.cols(),
            targets.cols()
        )));
    }
    fit_columns_impl(m, targets, eps, unit_hint, Some(start))
}

fn fit_columns_impl(
    m: &DenseMatrix,
    targets: &DenseMatrix,
    eps: f64,
    unit_hint: &[Option<usize>],
    start: Option<&DenseMatrix>,
) -> Result<MultiFit> {
    check_eps(eps)?;
    if m.rows() != targets.rows() {
        return Err(Error::invalid(format!(
            "design has {} rows, targets have {}",
            m.rows(),
            targets.rows()
        )));
    }
    if !unit_hint.is_empty() && unit_hint.len() != targets.cols() {
        return Err(Error::invalid("unit hint length must match target columns"));
    }
    let d = m.cols();
    let design = L1Design::new(m);
    let columns = targets.columns();
    let results: Vec<Result<RegressionResult>> = columns
        .par_iter()
        .enumerate()
        .map(|(j, b)| match unit_hint.get(j).copied().flatten() {
            Some(p) if p < d => {
                let mut x = vec![0.0; d];
                x[p] = 1.0;
                let cost = residual_cost(m, &x, b);
                Ok(RegressionResult::exact(x, cost))
            }
            Some(p) => Err(Error::invalid(format!(
                "unit hint {p} outside design with {d} columns"
            ))),
            None => match start {
                Some(s) => design.solve_from(b, eps, &s.column(j)),
                None => design.solve(b, eps),
            },
        })
        .collect();
    Ok(assemble(d, &columns, results))
}

fn assemble(d: usize, columns: &[Vec<f64>], results: Vec<Result<RegressionResult>>) -> MultiFit {
    let ncols = columns.len();
    let mut x = vec![0.0; d * ncols];
    let mut per_column_cost = Vec::with_capacity(ncols);
    let mut per_column_estimate = Vec::with_capacity(ncols);
    let mut unconverged = Vec::new();
    let mut failures = Vec::new();
    for (j, r) in results.into_iter().enumerate() {
        match r {
            Ok(r) => {
                for (l, v) in r.x.iter().enumerate() {
                    x[l * ncols + j] = *v;
                }
                if !r.converged {
                    unconverged.push(j);
                }
                per_column_cost.push(r.cost);
                per_column_estimate.push(r.estimate);
            }
            Err(e) => {
                let fallback = pairwise_abs_sum(&columns[j]);
                per_column_cost.push(fallback);
                per_column_estimate.push(fallback);
                failures.push((j, e.to_string()));
            }
        }
    }
    MultiFit {
        x: DenseMatrix::from_vec_unchecked(d, ncols, x),
        cost: crate::matrix::pairwise_sum(&per_column_cost),
        estimate: crate::matrix::pairwise_sum(&per_column_estimate),
        per_column_cost,
        per_column_estimate,
        unconverged,
        failures,
    }
}

impl MultiFit {
    /// Replaces column `j` of `self` with column `j` of `other` wherever
    /// `other` is cheaper. Both fits must share the target matrix; `other`'s
    /// coefficients are mapped through `row_map` (row `l` of `other.x` goes
    /// to row `row_map[l]` of `self.x`).
    pub(crate) fn take_cheaper(&mut self, other: &MultiFit, row_map: &[usize]) {
        let (d, ncols) = self.x.shape();
        let mut data = std::mem::replace(&mut self.x, DenseMatrix::zeros(0, 0)).into_data();
        for j in 0..ncols {
            if other.per_column_cost[j] < self.per_column_cost[j] {
                for l in 0..d {
                    data[l * ncols + j] = 0.0;
                }
                for (l, &target) in row_map.iter().enumerate() {
                    data[target * ncols + j] = other.x.get(l, j);
                }
                self.per_column_cost[j] = other.per_column_cost[j];
                self.per_column_estimate[j] = other.per_column_estimate[j];
                self.unconverged.retain(|&c| c != j);
                if other.unconverged.contains(&j) {
                    self.unconverged.push(j);
                }
                self.failures.retain(|(c, _)| *c != j);
            }
        }
        self.unconverged.sort_unstable();
        self.x = DenseMatrix::from_vec_unchecked(d, ncols, data);
        self.cost = crate::matrix::pairwise_sum(&self.per_column_cost);
        self.estimate = crate::matrix::pairwise_sum(&self.per_column_estimate);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn normal(rng: &mut SeededRng) -> f64 {
        let u1 = rng.uniform_open();
        let u2 = rng.uniform_open();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    #[test]
    fn span_target_is_fit_exactly() {
        let mut rng = SeededRng::new(1);
        let m = DenseMatrix::from_fn(30, 4, |_, _| normal(&mut rng)).unwrap();
        let w = [1.0, -2.0, 0.5, 3.0];
        let b: Vec<f64> = (0..30)
            .map(|i| m.row(i).iter().zip(&w).map(|(a, c)| a * c).sum())
            .collect();
        let r = l1_regression_approx(&m, &b, 0.1).unwrap();
        assert!(r.cost <= 1e-9 * pairwise_abs_sum(&b), "cost {}", r.cost);
        assert!(r.converged);
    }

    #[test]
    fn cost_bounded_by_target_norm() {
        let m = DenseMatrix::from_fn(10, 2, |i, j| ((i + 1) * (j + 2)) as f64).unwrap();
        let b = vec![1e-3, -5.0, 2.0, 0.0, 1.0, 7.0, -1.0, 0.5, 0.25, -3.0];
        let r = l1_regression_approx(&m, &b, 0.1).unwrap();
        assert!(r.cost <= pairwise_abs_sum(&b) + 1e-12);
    }

    #[test]
    fn estimate_sandwich_and_recomputed_cost() {
        let mut rng = SeededRng::new(2);
        for _ in 0..10 {
            let m = DenseMatrix::from_fn(25, 3, |_, _| normal(&mut rng)).unwrap();
            let b: Vec<f64> = (0..25).map(|_| normal(&mut rng)).collect();
            let eps = 0.05;
            let r = l1_regression_approx(&m, &b, eps).unwrap();
            assert_eq!(r.cost, residual_cost(&m, &r.x, &b));
            assert!(r.cost <= r.estimate && r.estimate <= (1.0 + eps) * r.cost * (1.0 + 1e-15));
        }
    }

    #[test]
    fn translation_shifts_optimizer() {
        let mut rng = SeededRng::new(3);
        let m = DenseMatrix::from_fn(40, 3, |_, _| normal(&mut rng)).unwrap();
        let b: Vec<f64> = (0..40).map(|_| normal(&mut rng)).collect();
        let w = [0.3, -1.2, 2.0];
        let shifted: Vec<f64> = (0..40)
            .map(|i| b[i] + m.row(i).iter().zip(&w).map(|(a, c)| a * c).sum::<f64>())
            .collect();
        let r1 = l1_regression_approx(&m, &b, 0.01).unwrap();
        let r2 = l1_regression_approx(&m, &shifted, 0.01).unwrap();
        let exact = l1_regression_exact(&m, &b).unwrap();
        assert!((r1.cost - exact.cost).abs() <= 1e-8 * exact.cost);
        assert!((r2.cost - exact.cost).abs() <= 1e-8 * exact.cost);
        for ((a, b), w) in r2.x.iter().zip(&r1.x).zip(&w) {
            assert!((a - b - w).abs() < 1e-6);
        }
    }

    #[test]
    fn multi_examples() {
        let mut rng = SeededRng::new(4);
        let m = DenseMatrix::from_fn(30, 4, |_, _| normal(&mut rng)).unwrap();
        let same = l1_regression_multi(&m, &m, 0.1).unwrap();
        for r in &same {
            assert!(r.as_ref().unwrap().cost < 1e-9 * 30.0);
        }

        let b = DenseMatrix::from_fn(30, 10, |_, _| normal(&mut rng)).unwrap();
        let multi = l1_regression_multi(&m, &b, 0.05).unwrap();
        for (j, r) in multi.into_iter().enumerate() {
            let single = l1_regression_approx(&m, &b.column(j), 0.05).unwrap();
            assert_eq!(r.unwrap(), single);
        }
    }

    #[test]
    fn multi_with_one_column_outside_span() {
        let m = DenseMatrix::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let t = DenseMatrix::from_rows(&[
            vec![1.0, 2.0, 0.0],
            vec![1.0, -1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![2.0, 1.0, 0.0],
        ])
        .unwrap();
        let costs: Vec<f64> = l1_regression_multi(&m, &t, 0.1)
            .unwrap()
            .into_iter()
            .map(|r| r.unwrap().cost)
            .collect();
        assert!(costs[0] < 1e-10 && costs[1] < 1e-10, "{costs:?}");
        assert!((costs[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn multi_rejects_row_mismatch_and_bad_eps() {
        let m = DenseMatrix::zeros(3, 1);
        assert!(l1_regression_multi(&m, &DenseMatrix::zeros(4, 2), 0.1).is_err());
        assert!(l1_regression_multi(&m, &DenseMatrix::zeros(3, 2), 1.0).is_err());
        assert!(l1_regression_approx(&m, &[0.0; 3], 0.0).is_err());
    }

    #[test]
    fn warm_start_matches_cold_fit() {
        let mut rng = SeededRng::new(9);
        let m = DenseMatrix::from_fn(40, 4, |_, _| normal(&mut rng)).unwrap();
        let t = DenseMatrix::from_fn(40, 6, |_, _| normal(&mut rng)).unwrap();
        let cold = fit_columns(&m, &t, 0.01, &[]).unwrap();
        let warm = fit_columns_from(&m, &t, 0.01, &[], &DenseMatrix::zeros(4, 6)).unwrap();
        for j in 0..6 {
            let exact = l1_regression_exact(&m, &t.column(j)).unwrap().cost;
            assert!(warm.per_column_cost[j] <= 1.01 * exact);
            assert!(cold.per_column_cost[j] <= 1.01 * exact);
        }
        assert!(fit_columns_from(&m, &t, 0.01, &[], &DenseMatrix::zeros(3, 6)).is_err());
    }

    #[test]
    fn fit_columns_unit_hints() {
        let mut rng = SeededRng::new(8);
        let a = DenseMatrix::from_fn(12, 5, |_, _| normal(&mut rng)).unwrap();
        let design = a.gather_columns(&[1, 3]).unwrap();
        let hints = vec![None, Some(0), None, Some(1), None];
        let fit = fit_columns(&design, &a, 0.1, &hints).unwrap();
        assert_eq!(fit.per_column_cost[1], 0.0);
        assert_eq!(fit.x.get(0, 1), 1.0);
        assert_eq!(fit.x.get(1, 3), 1.0);
        let plain = fit_columns(&design, &a, 0.1, &[]).unwrap();
        assert!((plain.cost - fit.cost).abs() < 1e-8 * plain.cost.max(1.0));
    }
}
