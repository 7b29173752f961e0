//! Dense row-major matrices, column subsets and entrywise norms.
//!
//! `data[i * cols + j]` holds entry `(i, j)`. Every constructor rejects
//! NaN and infinite entries, so downstream code can assume finiteness.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this length pairwise summation falls back to a plain loop.
const PAIRWISE_BLOCK: usize = 64;

/// Sum with pairwise (cascade) summation; error grows as `O(log n)` ulps.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        return values.iter().sum();
    }
    let (lo, hi) = values.split_at(values.len() / 2);
    pairwise_sum(lo) + pairwise_sum(hi)
}

/// Pairwise sum of `|v|` without materializing the absolute values.
pub fn pairwise_abs_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        return values.iter().map(|v| v.abs()).sum();
    }
    let (lo, hi) = values.split_at(values.len() / 2);
    pairwise_abs_sum(lo) + pairwise_abs_sum(hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for DenseMatrix {
    type Error = Error;
    fn try_from(raw: RawMatrix) -> Result<Self> {
        DenseMatrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl From<DenseMatrix> for RawMatrix {
    fn from(m: DenseMatrix) -> Self {
        RawMatrix {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite entry {} at ({}, {})",
                data[pos],
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    /// Builds a matrix whose column `j` is `columns[j]`.
    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::invalid("column length does not match row count"));
        }
        let cols = columns.len();
        Self::from_fn(rows, cols, |i, j| columns[j][i])
    }

    /// Skips the finiteness scan; callers guarantee finite data.
    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::with_capacity(self.rows); self.cols];
        for i in 0..self.rows {
            for (j, col) in out.iter_mut().enumerate() {
                col.push(self.get(i, j));
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Self::from_vec_unchecked(self.cols, self.rows, data)
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::invalid(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut data = vec![0.0; self.rows * other.cols];
        for i in 0..self.rows {
            let out = &mut data[i * other.cols..(i + 1) * other.cols];
            for (l, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out.iter_mut().zip(other.row(l)) {
                    *o += a * b;
                }
            }
        }
        DenseMatrix::new(self.rows, other.cols, data)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> Result<DenseMatrix> {
        if self.shape() != other.shape() {
            return Err(Error::invalid(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        DenseMatrix::new(self.rows, self.cols, data)
    }

    pub fn scale(&self, factor: f64) -> Result<DenseMatrix> {
        DenseMatrix::new(
            self.rows,
            self.cols,
            self.data.iter().map(|v| v * factor).collect(),
        )
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<DenseMatrix> {
        DenseMatrix::new(
            self.rows,
            self.cols,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Rows `rows` of the matrix, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<DenseMatrix> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.rows) {
            return Err(Error::invalid(format!(
                "row index {bad} out of range {}",
                self.rows
            )));
        }
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Ok(Self::from_vec_unchecked(rows.len(), self.cols, data))
    }

    /// Columns in the given order; duplicates allowed.
    pub fn gather_columns(&self, cols: &[usize]) -> Result<DenseMatrix> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.cols) {
            return Err(Error::invalid(format!(
                "column index {bad} out of range {}",
                self.cols
            )));
        }
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for i in 0..self.rows {
            let row = self.row(i);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        Ok(Self::from_vec_unchecked(self.rows, cols.len(), data))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Strictly ascending set of distinct column indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct ColumnSubset {
    indices: Vec<usize>,
}

impl TryFrom<Vec<usize>> for ColumnSubset {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        ColumnSubset::new(v)
    }
}

impl From<ColumnSubset> for Vec<usize> {
    fn from(s: ColumnSubset) -> Self {
        s.indices
    }
}

impl ColumnSubset {
    /// Sorts the indices; duplicates are rejected.
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate column index in subset"));
        }
        Ok(Self { indices })
    }

    /// Sorts and removes duplicates.
    pub fn from_unsorted_dedup(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self { indices }
    }

    pub fn all(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.binary_search(&j).is_ok()
    }

    pub fn position(&self, j: usize) -> Option<usize> {
        self.indices.binary_search(&j).ok()
    }

    pub fn union(&self, other: &ColumnSubset) -> ColumnSubset {
        let mut v = self.indices.clone();
        v.extend_from_slice(&other.indices);
        Self::from_unsorted_dedup(v)
    }

    /// Interprets `inner` as positions within `self` and maps them back to
    /// the indices of the parent matrix.
    pub fn compose(&self, inner: &ColumnSubset) -> Result<ColumnSubset> {
        inner
            .indices
            .iter()
            .map(|&p| {
                self.indices.get(p).copied().ok_or_else(|| {
                    Error::invalid(format!(
                        "position {p} outside subset of size {}",
                        self.len()
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(|v| ColumnSubset { indices: v })
    }

    pub fn check_bounds(&self, cols: usize) -> Result<()> {
        match self.indices.last() {
            Some(&last) if last >= cols => Err(Error::invalid(format!(
                "column index {last} out of range for {cols} columns"
            ))),
            _ => Ok(()),
        }
    }
}

fn ensure_finite(a: &DenseMatrix) -> Result<()> {
    // Matrices are finite by construction; this guards values produced by
    // `from_vec_unchecked` in release builds.
    if a.data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid("matrix contains non-finite entries"))
    }
}

/// `(Σ |a_ij|^p)^(1/p)`; pairwise summation, scaled by the max entry for
/// `p > 1` to avoid overflow.
pub fn entrywise_norm(a: &DenseMatrix, p: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::invalid(format!(
            "norm exponent must be finite and >= 1, got {p}"
        )));
    }
    ensure_finite(a)?;
    if p == 1.0 {
        return Ok(pairwise_abs_sum(&a.data));
    }
    let m = a.max_abs();
    if m == 0.0 {
        return Ok(0.0);
    }
    let powered: Vec<f64> = a.data.iter().map(|v| (v.abs() / m).powf(p)).collect();
    Ok(m * pairwise_sum(&powered).powf(1.0 / p))
}

pub fn frobenius_norm(a: &DenseMatrix) -> Result<f64> {
    entrywise_norm(a, 2.0)
}

pub fn select_columns(a: &DenseMatrix, subset: &ColumnSubset) -> Result<DenseMatrix> {
    subset.check_bounds(a.cols)?;
    a.gather_columns(subset.indices())
}

/// `‖A_S X − A‖₁`, evaluated exactly as `entrywise_norm(A_S·X − A, 1)`.
pub fn residual_l1(a_s: &DenseMatrix, x: &DenseMatrix, a: &DenseMatrix) -> Result<f64> {
    if a_s.rows != a.rows || a_s.cols != x.rows || x.cols != a.cols {
        return Err(Error::invalid(format!(
            "residual shapes incompatible: A_S {:?}, X {:?}, A {:?}",
            a_s.shape(),
            x.shape(),
            a.shape()
        )));
    }
    entrywise_norm(&a_s.matmul(x)?.sub(a)?, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn entrywise_norm_examples() {
        assert_eq!(
            entrywise_norm(&m(&[&[1.0, -2.0], &[3.0, 0.0]]), 1.0).unwrap(),
            6.0
        );
        assert_eq!(entrywise_norm(&DenseMatrix::zeros(3, 4), 1.0).unwrap(), 0.0);
        assert_eq!(entrywise_norm(&DenseMatrix::zeros(3, 4), 3.5).unwrap(), 0.0);
        assert!((entrywise_norm(&m(&[&[3.0, 4.0]]), 2.0).unwrap() - 5.0).abs() < 1e-15);
        assert!(entrywise_norm(&m(&[&[1.0]]), 0.5).is_err());
    }

    #[test]
    fn frobenius_examples() {
        assert!((frobenius_norm(&m(&[&[3.0, 4.0]])).unwrap() - 5.0).abs() < 1e-15);
        assert!((frobenius_norm(&DenseMatrix::identity(2)).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!((frobenius_norm(&m(&[&[1.0, 1.0], &[1.0, 1.0]])).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn construction_rejects_non_finite() {
        assert!(DenseMatrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(DenseMatrix::new(1, 2, vec![f64::INFINITY, 0.0]).is_err());
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn select_columns_examples() {
        let a = DenseMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64).unwrap();
        let s = select_columns(&a, &ColumnSubset::new(vec![2, 0]).unwrap()).unwrap();
        assert_eq!(s.shape(), (3, 2));
        assert_eq!(s.column(0), a.column(0));
        assert_eq!(s.column(1), a.column(2));
        assert_eq!(select_columns(&a, &ColumnSubset::all(3)).unwrap(), a);
        assert_eq!(
            select_columns(&a, &ColumnSubset::empty()).unwrap().shape(),
            (3, 0)
        );
        assert!(select_columns(&a, &ColumnSubset::new(vec![3]).unwrap()).is_err());
    }

    #[test]
    fn subset_rejects_duplicates_and_composes() {
        assert!(ColumnSubset::new(vec![1, 1]).is_err());
        let s = ColumnSubset::new(vec![7, 2, 5]).unwrap();
        assert_eq!(s.indices(), &[2, 5, 7]);
        let t = ColumnSubset::new(vec![0, 2]).unwrap();
        assert_eq!(s.compose(&t).unwrap().indices(), &[2, 7]);
        assert!(s.compose(&ColumnSubset::new(vec![3]).unwrap()).is_err());
    }

    #[test]
    fn residual_examples() {
        let a = m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let subset = ColumnSubset::all(3);
        let a_s = select_columns(&a, &subset).unwrap();
        assert_eq!(
            residual_l1(&a_s, &DenseMatrix::identity(3), &a).unwrap(),
            0.0
        );
        assert_eq!(
            residual_l1(&a_s, &DenseMatrix::zeros(3, 3), &a).unwrap(),
            21.0
        );
        assert!(residual_l1(&a_s, &DenseMatrix::zeros(2, 3), &a).is_err());
    }

    #[test]
    fn residual_matches_direct_summation() {
        // Deterministic pseudo-random entries; oracle sums entry by entry.
        let mut state = 0x2545F4914F6CDD1Du64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let a_s = DenseMatrix::from_fn(5, 3, |_, _| next()).unwrap();
        let x = DenseMatrix::from_fn(3, 5, |_, _| next()).unwrap();
        let a = DenseMatrix::from_fn(5, 5, |_, _| next()).unwrap();
        let mut oracle = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                let mut v = -a.get(i, j);
                for l in 0..3 {
                    v += a_s.get(i, l) * x.get(l, j);
                }
                oracle += v.abs();
            }
        }
        let got = residual_l1(&a_s, &x, &a).unwrap();
        assert!((got - oracle).abs() <= 1e-14 * oracle);
    }
}
