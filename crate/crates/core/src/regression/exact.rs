//! Exact least-absolute-deviations fit as a linear program.

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use super::{check_shapes, residual_cost, RegressionResult};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Largest `rows × cols` design accepted by [`l1_regression_exact`].
pub const EXACT_SIZE_CAP: usize = 100_000;

/// Global minimizer of `‖Mx − b‖₁`.
///
/// Formulated with one auxiliary variable per row:
/// minimize `Σ tᵢ` subject to `−tᵢ ≤ mᵢᵀx − bᵢ ≤ tᵢ`.
pub fn l1_regression_exact(m: &DenseMatrix, b: &[f64]) -> Result<RegressionResult> {
    check_shapes(m, b)?;
    let (n, d) = m.shape();
    if n == 0 {
        return Err(Error::invalid("design has no rows"));
    }
    if d > n {
        return Err(Error::invalid(format!(
            "exact solver needs cols <= rows, got {n}x{d}"
        )));
    }
    if n * d > EXACT_SIZE_CAP {
        return Err(Error::Capacity(format!(
            "{n}x{d} design exceeds the exact solver cap of {EXACT_SIZE_CAP} entries; use l1_regression_approx"
        )));
    }
    if d == 0 {
        return Ok(RegressionResult::exact(
            Vec::new(),
            residual_cost(m, &[], b),
        ));
    }
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let xs: Vec<_> = (0..d)
        .map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY)))
        .collect();
    let ts: Vec<_> = (0..n)
        .map(|_| lp.add_var(1.0, (0.0, f64::INFINITY)))
        .collect();
    for i in 0..n {
        let row = m.row(i);
        let mut upper: Vec<_> = xs.iter().zip(row).map(|(&v, &c)| (v, c)).collect();
        let mut lower = upper.clone();
        upper.push((ts[i], -1.0));
        lower.push((ts[i], 1.0));
        lp.add_constraint(upper, ComparisonOp::Le, b[i]);
        lp.add_constraint(lower, ComparisonOp::Ge, b[i]);
    }
    let solution = lp
        .solve()
        .map_err(|e| Error::solver(format!("LP failed: {e}")))?
        .into_solution()
        .map_err(|_| Error::solver("LP solve interrupted"))?;
    let x: Vec<f64> = xs.iter().map(|&v| solution.var_value(v)).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::solver("LP returned a non-finite coefficient"));
    }
    let cost = residual_cost(m, &x, b);
    Ok(RegressionResult::exact(x, cost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Lu;
    use crate::rng::SeededRng;

    #[test]
    fn target_in_span() {
        let b = vec![1.0, -2.0, 3.5];
        let m = DenseMatrix::from_columns(3, std::slice::from_ref(&b)).unwrap();
        let r = l1_regression_exact(&m, &b).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-9);
        assert!(r.cost < 1e-9);
    }

    #[test]
    fn median_fit() {
        let m = DenseMatrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        let r = l1_regression_exact(&m, &[0.0, 0.0, 10.0]).unwrap();
        assert!(r.x[0].abs() < 1e-9);
        assert!((r.cost - 10.0).abs() < 1e-9);
        assert_eq!(r.estimate, r.cost);
    }

    fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur: Vec<usize> = (0..k).collect();
        loop {
            out.push(cur.clone());
            let mut i = k;
            while i > 0 && cur[i - 1] == n - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                return out;
            }
            cur[i - 1] += 1;
            for j in i..k {
                cur[j] = cur[j - 1] + 1;
            }
        }
    }

    #[test]
    fn matches_basic_solution_enumeration() {
        // Some optimum interpolates `d` rows, so the best basic solution is
        // the optimum.
        let mut rng = SeededRng::new(99);
        for _ in 0..3 {
            let m = DenseMatrix::from_fn(20, 3, |_, _| rng.uniform_range(-1.0, 1.0)).unwrap();
            let b: Vec<f64> = (0..20).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
            let mut best = f64::INFINITY;
            for rows in combinations(20, 3) {
                let sys: Vec<f64> = rows.iter().flat_map(|&r| m.row(r).to_vec()).collect();
                if let Some(x) =
                    Lu::new(sys, 3).solve(&rows.iter().map(|&r| b[r]).collect::<Vec<_>>())
                {
                    best = best.min(residual_cost(&m, &x, &b));
                }
            }
            let r = l1_regression_exact(&m, &b).unwrap();
            assert!((r.cost - best).abs() <= 1e-9 * best, "{} vs {best}", r.cost);
        }
    }

    #[test]
    fn capacity_and_shape_errors() {
        let m = DenseMatrix::zeros(1001, 100);
        assert!(matches!(
            l1_regression_exact(&m, &vec![0.0; 1001]),
            Err(Error::Capacity(_))
        ));
        let m = DenseMatrix::zeros(3, 4);
        assert!(l1_regression_exact(&m, &[0.0; 3]).is_err());
        assert!(l1_regression_exact(&DenseMatrix::zeros(3, 1), &[0.0; 2]).is_err());
    }

    #[test]
    fn empty_design_costs_norm_of_target() {
        let r = l1_regression_exact(&DenseMatrix::zeros(3, 0), &[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(r.cost, 3.5);
    }
}
