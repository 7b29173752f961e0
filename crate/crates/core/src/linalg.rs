//! Small dense kernels: ridged Cholesky, LU with partial pivoting,
//! Gram–Schmidt bases and a one-sided Jacobi SVD.
//!
//! Square matrices here are plain row-major `Vec<f64>` of length `n * n`.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// In-place Cholesky of a symmetric positive definite matrix. Only the lower
/// triangle is read. Returns `false` if a pivot is not strictly positive.
fn cholesky_in_place(g: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut diag = g[j * n + j];
        for l in 0..j {
            diag -= g[j * n + l] * g[j * n + l];
        }
        if !(diag > 0.0 && diag.is_finite()) {
            return false;
        }
        let pivot = diag.sqrt();
        g[j * n + j] = pivot;
        for i in j + 1..n {
            let mut v = g[i * n + j];
            for l in 0..j {
                v -= g[i * n + l] * g[j * n + l];
            }
            g[i * n + j] = v / pivot;
        }
    }
    true
}

fn cholesky_substitute(l: &[f64], n: usize, rhs: &mut [f64]) {
    for i in 0..n {
        let mut v = rhs[i];
        for k in 0..i {
            v -= l[i * n + k] * rhs[k];
        }
        rhs[i] = v / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut v = rhs[i];
        for k in i + 1..n {
            v -= l[k * n + i] * rhs[k];
        }
        rhs[i] = v / l[i * n + i];
    }
}

/// Solves `(G + ρI) x = rhs` for symmetric PSD `G` with `ρ = rel_ridge·trace(G)`.
/// If the factorization breaks down the ridge is raised a hundredfold and the
/// solve retried.
pub fn solve_spd_ridged(g: &[f64], n: usize, rhs: &[f64], rel_ridge: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let trace: f64 = (0..n).map(|i| g[i * n + i]).sum();
    let mut ridge = rel_ridge * if trace > 0.0 { trace } else { 1.0 };
    let mut work = vec![0.0; n * n];
    for _ in 0..12 {
        work.copy_from_slice(g);
        for i in 0..n {
            work[i * n + i] += ridge;
        }
        if cholesky_in_place(&mut work, n) {
            let mut x = rhs.to_vec();
            cholesky_substitute(&work, n, &mut x);
            if x.iter().all(|v| v.is_finite()) {
                return Ok(x);
            }
        }
        ridge *= 100.0;
    }
    Err(Error::solver("normal equations could not be factored"))
}

/// LU factorization with partial pivoting, `PA = LU`.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    sign: f64,
    singular: bool,
}

impl Lu {
    pub fn new(mut a: Vec<f64>, n: usize) -> Self {
        assert_eq!(a.len(), n * n);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let mut singular = false;
        for k in 0..n {
            let (p, best) = (k..n)
                .map(|i| (i, a[i * n + k].abs()))
                .fold((k, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            if best == 0.0 {
                singular = true;
                continue;
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = a[k * n + k];
            for i in k + 1..n {
                let f = a[i * n + k] / pivot;
                a[i * n + k] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        a[i * n + j] -= f * a[k * n + j];
                    }
                }
            }
        }
        Self {
            n,
            lu: a,
            perm,
            sign,
            singular,
        }
    }

    pub fn det(&self) -> f64 {
        if self.singular {
            return 0.0;
        }
        (0..self.n).fold(self.sign, |d, i| d * self.lu[i * self.n + i])
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    pub fn solve(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        if self.singular {
            return None;
        }
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.lu[i * n + k] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                x[i] -= self.lu[i * n + k] * x[k];
            }
            x[i] /= self.lu[i * n + i];
        }
        x.iter().all(|v| v.is_finite()).then_some(x)
    }
}

impl Lu {
    /// Row-major inverse, or `None` if singular.
    pub fn inverse(&self) -> Option<Vec<f64>> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for c in 0..n {
            e.fill(0.0);
            e[c] = 1.0;
            let col = self.solve(&e)?;
            for (r, v) in col.into_iter().enumerate() {
                inv[r * n + c] = v;
            }
        }
        Some(inv)
    }
}

pub fn det(a: &[f64], n: usize) -> f64 {
    Lu::new(a.to_vec(), n).det()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    let m = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m == 0.0 {
        return 0.0;
    }
    m * a.iter().map(|v| (v / m) * (v / m)).sum::<f64>().sqrt()
}

/// Orthonormal basis of the span of `columns` by modified Gram–Schmidt with
/// one reorthogonalization pass. A column is dropped when its remaining
/// norm falls below `rel_tol` times its original norm.
pub fn orthonormal_basis(columns: &[Vec<f64>], rel_tol: f64) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for col in columns {
        let original = norm2(col);
        if original == 0.0 {
            continue;
        }
        let mut v = col.clone();
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        }
        let remaining = norm2(&v);
        if remaining > rel_tol * original {
            for vi in v.iter_mut() {
                *vi /= remaining;
            }
            basis.push(v);
        }
    }
    basis
}

/// Thin SVD `A = U diag(s) Vᵀ` with `s` sorted descending.
#[derive(Debug, Clone)]
pub struct Svd {
    /// Left singular vectors, one per entry of `s`.
    pub u: Vec<Vec<f64>>,
    pub s: Vec<f64>,
    pub v: Vec<Vec<f64>>,
}

const JACOBI_TOL: f64 = 1e-15;
const JACOBI_MAX_SWEEPS: usize = 60;

/// One-sided Jacobi on the columns of `cols` (each of length `m`). Returns
/// (orthogonalized columns, accumulated right rotations as columns).
fn hestenes(mut cols: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = cols.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let mut norms: Vec<f64> = cols.iter().map(|c| dot(c, c)).collect();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot(&cols[p], &cols[q]);
                if gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = cols.split_at_mut(q);
                for (a, b) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                    let (x, y) = (*a, *b);
                    *a = c * x - s * y;
                    *b = s * x + c * y;
                }
                let (lo, hi) = v.split_at_mut(q);
                for (a, b) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                    let (x, y) = (*a, *b);
                    *a = c * x - s * y;
                    *b = s * x + c * y;
                }
                norms[p] = dot(&cols[p], &cols[p]);
                norms[q] = dot(&cols[q], &cols[q]);
            }
        }
        if !rotated {
            break;
        }
    }
    (cols, v)
}

/// Deterministic thin SVD; Jacobi runs on whichever of `A`, `Aᵀ` has fewer
/// columns.
pub fn svd(a: &DenseMatrix) -> Svd {
    let (m, n) = a.shape();
    let transposed = n > m;
    let cols = if transposed {
        a.transpose().columns()
    } else {
        a.columns()
    };
    let (work, right) = hestenes(cols);
    let mut order: Vec<(usize, f64)> = work.iter().map(|c| norm2(c)).enumerate().collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    let mut s = Vec::with_capacity(order.len());
    let mut left = Vec::with_capacity(order.len());
    let mut rightv = Vec::with_capacity(order.len());
    for &(j, sigma) in &order {
        let u: Vec<f64> = if sigma > 0.0 {
            work[j].iter().map(|x| x / sigma).collect()
        } else {
            vec![0.0; work[j].len()]
        };
        s.push(sigma);
        left.push(u);
        rightv.push(right[j].clone());
    }
    if transposed {
        Svd {
            u: rightv,
            s,
            v: left,
        }
    } else {
        Svd {
            u: left,
            s,
            v: rightv,
        }
    }
}

/// `Σ_{j<k} s_j u_j v_jᵀ`.
pub fn reconstruct(decomp: &Svd, rows: usize, cols: usize, k: usize) -> DenseMatrix {
    let mut data = vec![0.0; rows * cols];
    for j in 0..k.min(decomp.s.len()) {
        let sigma = decomp.s[j];
        if sigma == 0.0 {
            continue;
        }
        let u = &decomp.u[j];
        let v = &decomp.v[j];
        for i in 0..rows {
            let f = sigma * u[i];
            let row = &mut data[i * cols..(i + 1) * cols];
            for (o, &vj) in row.iter_mut().zip(v) {
                *o += f * vj;
            }
        }
    }
    DenseMatrix::from_vec_unchecked(rows, cols, data)
}
