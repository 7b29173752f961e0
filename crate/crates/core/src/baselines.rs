//! Comparison methods and synthetic ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{reconstruct, svd, Svd};
use crate::matrix::{residual_l1, DenseMatrix};
use crate::noise::sample_cauchy_matrix;
use crate::regression::fit_columns;
use crate::rng::SeededRng;
use crate::selection::DEFAULT_FIT_EPS;

/// Best rank-`k` approximation in Frobenius norm.
pub fn truncated_svd(a: &DenseMatrix, k: usize) -> Result<DenseMatrix> {
    let (n, d) = a.shape();
    if k > n.min(d) {
        return Err(Error::invalid(format!("rank {k} exceeds min({n}, {d})")));
    }
    if k == n.min(d) {
        return Ok(a.clone());
    }
    Ok(truncate(&svd(a), n, d, k))
}

/// Rank-`k` truncation of a precomputed decomposition.
pub fn truncate(decomp: &Svd, rows: usize, cols: usize, k: usize) -> DenseMatrix {
    reconstruct(decomp, rows, cols, k)
}

/// Size of the Cauchy sketch for rank `k`: `⌈2k·ln(2k) + 2k⌉`.
pub fn sketch_size(k: usize) -> usize {
    let k = k as f64;
    (2.0 * k * (2.0 * k).ln() + 2.0 * k).ceil() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchFit {
    /// Orthonormal `rows × r` basis, `r ≤ k`.
    pub basis: DenseMatrix,
    /// `r × cols` coefficients.
    pub x: DenseMatrix,
    /// Exact `‖basis·x − A‖₁`.
    pub cost: f64,
    pub estimate: f64,
    pub sketch_columns: usize,
}

/// Cauchy-sketch low-rank fit in the style of the poly(k log n) method.
///
/// `A` is multiplied by a dense `cols × m` standard Cauchy matrix, the top
/// `k` left singular vectors of the sketch form the factor, and every column
/// of `A` is `ℓ1`-fit onto that factor.
pub fn cauchy_sketch_l1_lowrank(a: &DenseMatrix, k: usize, seed: u64) -> Result<SketchFit> {
    cauchy_sketch_l1_lowrank_with(a, k, DEFAULT_FIT_EPS, seed)
}

pub fn cauchy_sketch_l1_lowrank_with(
    a: &DenseMatrix,
    k: usize,
    eps: f64,
    seed: u64,
) -> Result<SketchFit> {
    let (rows, cols) = a.shape();
    if k == 0 {
        return Err(Error::invalid("rank must be positive"));
    }
    let m = sketch_size(k).min(cols);
    let sketch = a.matmul(&sample_cauchy_matrix(cols, m, seed)?)?;
    let decomp = svd(&sketch);
    let r = k.min(decomp.s.iter().filter(|&&s| s > 0.0).count());
    let basis = DenseMatrix::from_columns(rows, &decomp.u[..r])?;
    let fit = fit_columns(&basis, a, eps, &[])?;
    let cost = residual_l1(&basis, &fit.x, a)?;
    Ok(SketchFit {
        basis,
        x: fit.x,
        cost,
        estimate: fit.estimate,
        sketch_columns: m,
    })
}

/// `n × d` matrix of i.i.d. uniform integers in `{0, …, 9}`.
pub fn synthetic_base(n: usize, d: usize, seed: u64) -> Result<DenseMatrix> {
    let mut rng = SeededRng::new(seed);
    DenseMatrix::from_fn(n, d, |_, _| rng.below(10) as f64)
}

/// Rank-`k` truncation of [`synthetic_base`].
pub fn make_synthetic_ground_truth(n: usize, d: usize, k: usize, seed: u64) -> Result<DenseMatrix> {
    if k > n.min(d) {
        return Err(Error::invalid(format!("rank {k} exceeds min({n}, {d})")));
    }
    truncated_svd(&synthetic_base(n, d, seed)?, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{entrywise_norm, frobenius_norm};

    fn rel_frob(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
        frobenius_norm(&a.sub(b).unwrap()).unwrap() / frobenius_norm(a).unwrap()
    }

    #[test]
    fn truncated_svd_examples() {
        let d = DenseMatrix::from_rows(&[
            vec![5.0, 0.0, 0.0],
            vec![0.0, 3.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let t = truncated_svd(&d, 2).unwrap();
        let want = DenseMatrix::from_rows(&[
            vec![5.0, 0.0, 0.0],
            vec![0.0, 3.0, 0.0],
            vec![0.0, 0.0, 0.0],
        ])
        .unwrap();
        assert!(frobenius_norm(&t.sub(&want).unwrap()).unwrap() < 1e-13);
        assert_eq!(truncated_svd(&d, 3).unwrap(), d);
        assert!(truncated_svd(&d, 4).is_err());

        let low = make_synthetic_ground_truth(30, 20, 3, 1).unwrap();
        assert!(rel_frob(&low, &truncated_svd(&low, 3).unwrap()) < 1e-10);
    }

    #[test]
    fn truncated_svd_is_deterministic() {
        let a = synthetic_base(25, 18, 2).unwrap();
        assert_eq!(truncated_svd(&a, 4).unwrap(), truncated_svd(&a, 4).unwrap());
    }

    #[test]
    fn ground_truth_has_numerical_rank_k() {
        let a = make_synthetic_ground_truth(40, 30, 4, 3).unwrap();
        let s = svd(&a).s;
        assert!(s[4] < 1e-8 * s[0], "{:?}", &s[..6]);
        assert_eq!(
            make_synthetic_ground_truth(10, 12, 10, 4).unwrap(),
            synthetic_base(10, 12, 4).unwrap()
        );
    }

    #[test]
    fn sketch_examples() {
        assert_eq!(sketch_size(1), 4);
        assert_eq!(sketch_size(5), 34);
        let a = make_synthetic_ground_truth(30, 40, 3, 5).unwrap();
        let norm = entrywise_norm(&a, 1.0).unwrap();
        let fit = cauchy_sketch_l1_lowrank(&a, 3, 6).unwrap();
        assert!(fit.cost < 1e-8 * norm, "{}", fit.cost);
        let full = cauchy_sketch_l1_lowrank(&a, 40, 7).unwrap();
        assert!(full.cost < 1e-8 * norm);
        let noisy = a.add(&sample_cauchy_matrix(30, 40, 8).unwrap()).unwrap();
        let f = cauchy_sketch_l1_lowrank(&noisy, 3, 9).unwrap();
        assert!(f.cost <= entrywise_norm(&noisy, 1.0).unwrap());
    }

    #[test]
    fn svd_beats_other_rank_k_methods_in_frobenius() {
        let a = make_synthetic_ground_truth(30, 30, 3, 10)
            .unwrap()
            .add(&sample_cauchy_matrix(30, 30, 11).unwrap())
            .unwrap();
        let t = truncated_svd(&a, 3).unwrap();
        let f = cauchy_sketch_l1_lowrank(&a, 3, 12).unwrap();
        let other = f.basis.matmul(&f.x).unwrap();
        assert!(
            frobenius_norm(&a.sub(&t).unwrap()).unwrap()
                <= frobenius_norm(&a.sub(&other).unwrap()).unwrap()
        );
    }
}
