//! Maximal-volume column subsets and the tuple machinery built on them.

use rayon::prelude::*;

use super::{mean, LemmaReport};
use crate::error::{Error, Result};
use crate::linalg::{det, svd, Lu};
use crate::matrix::{select_columns, ColumnSubset, DenseMatrix};
use crate::rng::{derive_seed, SeededRng};

/// Largest rank handled by the exhaustive search.
pub const MAX_VOLUME_RANK: usize = 5;
/// Largest number of `(P, Q)` pairs the exhaustive search will visit.
pub const MAX_ENUMERATION: u128 = 5_000_000;
/// Fraction of the index sets that must avoid the target for a tuple to be good.
pub const GOOD_TUPLE_FRACTION: f64 = 0.5;
const RANK_TOL: f64 = 1e-9;
/// Relative margin a determinant must clear to displace an earlier maximum.
const TIE_TOL: f64 = 1e-12;
const CRAMER_SLACK: f64 = 1e-8;

/// Number of singular values above `1e-9·σ₁`.
pub fn numerical_rank(a: &DenseMatrix) -> usize {
    if a.rows() == 0 || a.cols() == 0 {
        return 0;
    }
    let s = svd(a).s;
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&v| v > RANK_TOL * top).count(),
        _ => 0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxVolume {
    /// Maximizing column set, as indices into the full matrix.
    pub columns: ColumnSubset,
    /// Maximizing row set, ascending.
    pub rows: Vec<usize>,
    /// `|det|` of the maximizing square submatrix.
    pub volume: f64,
    pub rank: usize,
}

fn binomial(n: usize, r: usize) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    (0..r).fold(1u128, |acc, i| {
        acc.saturating_mul((n - i) as u128) / (i as u128 + 1)
    })
}

/// Advances `c` to the next `r`-combination of `0..n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let r = c.len();
    for pos in (0..r).rev() {
        if c[pos] < n - r + pos {
            c[pos] += 1;
            for q in pos + 1..r {
                c[q] = c[q - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn small_det(m: &[f64], r: usize) -> f64 {
    match r {
        0 => 1.0,
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        3 => {
            m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
                + m[2] * (m[3] * m[7] - m[4] * m[6])
        }
        _ => det(m, r),
    }
}

/// Exhaustive search for the `P ⊆ S`, `Q ⊆ rows` with `|P| = |Q| = rank(A*_S)`
/// maximizing `|det(A*[Q, P])|`. Ties go to the lexicographically smallest
/// `P`, then `Q`.
pub fn max_volume_submatrix(a_star: &DenseMatrix, subset: &ColumnSubset) -> Result<MaxVolume> {
    subset.check_bounds(a_star.cols())?;
    let sub = select_columns(a_star, subset)?;
    let r = numerical_rank(&sub);
    if r > MAX_VOLUME_RANK {
        return Err(Error::Capacity(format!(
            "rank {r} exceeds the exhaustive limit {MAX_VOLUME_RANK}"
        )));
    }
    let rows = a_star.rows();
    let visits = binomial(subset.len(), r).saturating_mul(binomial(rows, r));
    if visits > MAX_ENUMERATION {
        return Err(Error::Capacity(format!(
            "{visits} submatrices exceed the exhaustive limit {MAX_ENUMERATION}"
        )));
    }
    if r == 0 {
        return Ok(MaxVolume {
            columns: ColumnSubset::empty(),
            rows: Vec::new(),
            volume: 1.0,
            rank: 0,
        });
    }

    let mut col_sets = Vec::new();
    let mut c: Vec<usize> = (0..r).collect();
    loop {
        col_sets.push(c.clone());
        if !next_combination(&mut c, subset.len()) {
            break;
        }
    }
    let sub = &sub;
    let per_set: Vec<(f64, Vec<usize>)> = col_sets
        .par_iter()
        .map(|cols| {
            // Row-major rows × r block of the chosen columns.
            let block: Vec<f64> = (0..rows)
                .flat_map(|i| cols.iter().map(move |&c| sub.get(i, c)))
                .collect();
            let mut q: Vec<usize> = (0..r).collect();
            let mut square = vec![0.0; r * r];
            let mut best = (-1.0, q.clone());
            loop {
                for (a, &row) in q.iter().enumerate() {
                    square[a * r..(a + 1) * r].copy_from_slice(&block[row * r..(row + 1) * r]);
                }
                let v = small_det(&square, r).abs();
                if v > best.0 * (1.0 + TIE_TOL) {
                    best = (v, q.clone());
                }
                if !next_combination(&mut q, rows) {
                    break;
                }
            }
            best
        })
        .collect();

    let mut best = 0;
    for (idx, cand) in per_set.iter().enumerate() {
        if cand.0 > per_set[best].0 * (1.0 + TIE_TOL) {
            best = idx;
        }
    }
    let columns = ColumnSubset::new(
        col_sets[best]
            .iter()
            .map(|&p| subset.indices()[p])
            .collect(),
    )?;
    Ok(MaxVolume {
        columns,
        rows: per_set[best].1.clone(),
        volume: per_set[best].0,
        rank: r,
    })
}

/// The column part of [`max_volume_submatrix`].
pub fn max_volume_subset(a_star: &DenseMatrix, subset: &ColumnSubset) -> Result<ColumnSubset> {
    Ok(max_volume_submatrix(a_star, subset)?.columns)
}

/// Fits column `i` over the maximal-volume columns `P` of `S ∪ {i}` and
/// returns `‖x‖∞`. Requires `i ∉ P`.
pub fn cramer_fit_check(a_star: &DenseMatrix, subset: &ColumnSubset, i: usize) -> Result<f64> {
    if i >= a_star.cols() {
        return Err(Error::invalid(format!("column {i} out of range")));
    }
    if subset.contains(i) {
        return Err(Error::invalid(format!(
            "column {i} already belongs to the subset"
        )));
    }
    let extended = subset.union(&ColumnSubset::new(vec![i])?);
    let mv = max_volume_submatrix(a_star, &extended)?;
    if mv.columns.contains(i) {
        return Err(Error::invalid(format!(
            "column {i} is part of the maximal-volume set"
        )));
    }
    let r = mv.rank;
    if r == 0 {
        return Ok(0.0);
    }
    let mut square = Vec::with_capacity(r * r);
    for &row in &mv.rows {
        square.extend(mv.columns.indices().iter().map(|&c| a_star.get(row, c)));
    }
    let rhs: Vec<f64> = mv.rows.iter().map(|&row| a_star.get(row, i)).collect();
    let lu = Lu::new(square, r);
    let x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::solver("maximal-volume submatrix is singular"))?;
    Ok(x.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

fn random_low_rank(rows: usize, cols: usize, k: usize, rng: &mut SeededRng) -> Result<DenseMatrix> {
    let left = DenseMatrix::from_fn(rows, k, |_, _| rng.uniform_range(-1.0, 1.0))?;
    let right = DenseMatrix::from_fn(k, cols, |_, _| rng.uniform_range(-1.0, 1.0))?;
    left.matmul(&right)
}

/// Runs [`cramer_fit_check`] on `count` random `8 × 10` instances of rank
/// `1..=4`. Each instance draws six columns `T`, takes the first column of
/// `T` outside its maximal-volume set as the target and the rest as `S`.
pub fn cramer_trials(count: usize, seed: u64) -> Result<LemmaReport> {
    let values = (0..count)
        .into_par_iter()
        .map(|trial| {
            let mut rng = SeededRng::new(derive_seed(seed, trial as u64));
            let k = 1 + rng.below(4);
            let a = random_low_rank(8, 10, k, &mut rng)?;
            let pool = ColumnSubset::from_unsorted_dedup(rng.sample_without_replacement(10, 6));
            let chosen = max_volume_subset(&a, &pool)?;
            let target = *pool
                .indices()
                .iter()
                .find(|&&j| !chosen.contains(j))
                .expect("six columns exceed rank four");
            let rest = ColumnSubset::new(
                pool.indices()
                    .iter()
                    .copied()
                    .filter(|&j| j != target)
                    .collect(),
            )?;
            cramer_fit_check(&a, &rest, target)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut report = LemmaReport::new("cramer_fit", seed);
    for &v in &values {
        report.record(v <= 1.0 + CRAMER_SLACK);
    }
    report.stat(
        "max_coefficient",
        values.iter().copied().fold(0.0, f64::max),
    );
    report.stat("mean_coefficient", mean(&values));
    report.stat("bound", 1.0 + CRAMER_SLACK);
    report.finish()
}

/// Samples `(S_1, …, S_t, i)` tuples by drawing `q·t + 1` distinct columns in
/// random order, and counts how often `i` avoids the maximal-volume set of
/// `S_j ∪ {i}` for at least half of the `j`.
///
/// The report compares the good fraction with `1 − 2k/q` minus three
/// standard errors (`meets_bound` is 1 when it clears it).
pub fn good_tuple_fraction(
    a_star: &DenseMatrix,
    q: usize,
    t: usize,
    trials: usize,
    seed: u64,
) -> Result<LemmaReport> {
    let k = numerical_rank(a_star);
    if t == 0 {
        return Err(Error::invalid("need at least one index set"));
    }
    if q <= 10 * k {
        return Err(Error::invalid(format!(
            "set size {q} must exceed 10·rank = {}",
            10 * k
        )));
    }
    let needed = q * t + 1;
    if needed > a_star.cols() {
        return Err(Error::invalid(format!(
            "{needed} columns needed, matrix has {}",
            a_star.cols()
        )));
    }
    let cores = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = SeededRng::new(derive_seed(seed, trial as u64));
            let order = rng.sample_without_replacement(a_star.cols(), needed);
            let target = order[q * t];
            let mut core = 0;
            for chunk in order[..q * t].chunks(q) {
                let mut set = chunk.to_vec();
                set.push(target);
                if !max_volume_subset(a_star, &ColumnSubset::from_unsorted_dedup(set))?
                    .contains(target)
                {
                    core += 1;
                }
            }
            Ok(core)
        })
        .collect::<Result<Vec<usize>>>()?;

    let mut report = LemmaReport::new("good_tuple", seed);
    for &c in &cores {
        report.record(c as f64 >= GOOD_TUPLE_FRACTION * t as f64);
    }
    let fraction = report.pass_fraction();
    let stderr = if trials == 0 {
        0.0
    } else {
        (fraction * (1.0 - fraction) / trials as f64).sqrt()
    };
    let bound = 1.0 - 2.0 * k as f64 / q as f64;
    report.stat("rank", k as f64);
    report.stat("fraction", fraction);
    report.stat("stderr", stderr);
    report.stat("bound", bound);
    report.stat("threshold", bound - 3.0 * stderr);
    report.stat(
        "meets_bound",
        f64::from(u8::from(fraction >= bound - 3.0 * stderr)),
    );
    report.stat(
        "mean_core",
        mean(&cores.iter().map(|&c| c as f64).collect::<Vec<_>>()),
    );
    report.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::make_synthetic_ground_truth;

    /// Independent enumeration: bitmask subsets, determinants by LU.
    fn reference_max_volume(a: &DenseMatrix, subset: &[usize], r: usize) -> (Vec<usize>, f64) {
        let mut best: (Vec<usize>, f64) = (Vec::new(), -1.0);
        let n = subset.len();
        let mut masks: Vec<u32> = (0u32..1 << n)
            .filter(|m| m.count_ones() as usize == r)
            .collect();
        // Ascending order of the chosen positions, to mirror lexicographic tie-breaking.
        masks.sort_by_key(|m| (0..n).filter(|b| m & (1 << b) != 0).collect::<Vec<_>>());
        for mask in masks {
            let cols: Vec<usize> = (0..n)
                .filter(|b| mask & (1 << b) != 0)
                .map(|b| subset[b])
                .collect();
            for rmask in 0u32..1 << a.rows() {
                if rmask.count_ones() as usize != r {
                    continue;
                }
                let rows: Vec<usize> = (0..a.rows()).filter(|b| rmask & (1 << b) != 0).collect();
                let m: Vec<f64> = rows
                    .iter()
                    .flat_map(|&i| cols.iter().map(move |&j| a.get(i, j)))
                    .collect();
                let v = det(&m, r).abs();
                if v > best.1 * (1.0 + 1e-12) {
                    best = (cols.clone(), v);
                }
            }
        }
        best
    }

    #[test]
    fn identity_selects_everything() {
        let a = DenseMatrix::identity(3);
        let mv = max_volume_submatrix(&a, &ColumnSubset::all(3)).unwrap();
        assert_eq!(mv.columns.indices(), &[0, 1, 2]);
        assert_eq!(mv.rank, 3);
        assert!((mv.volume - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rank_one_picks_largest_entry() {
        let u = [1.0, -0.5, 0.25];
        let a = DenseMatrix::from_fn(3, 2, |i, j| u[i] * if j == 0 { 1.0 } else { 3.0 }).unwrap();
        let p = max_volume_subset(&a, &ColumnSubset::all(2)).unwrap();
        assert_eq!(p.indices(), &[1]);
    }

    #[test]
    fn agrees_with_reference_enumeration() {
        for seed in 0..10 {
            let mut rng = SeededRng::new(seed);
            let a = random_low_rank(6, 4, 2, &mut rng).unwrap();
            let mv = max_volume_submatrix(&a, &ColumnSubset::all(4)).unwrap();
            let (cols, vol) = reference_max_volume(&a, &[0, 1, 2, 3], 2);
            assert_eq!(mv.columns.indices(), cols.as_slice());
            assert!((mv.volume - vol).abs() <= 1e-12 * vol);
        }
    }

    #[test]
    fn relabeling_columns_relabels_output() {
        let mut rng = SeededRng::new(21);
        let a = random_low_rank(6, 7, 3, &mut rng).unwrap();
        let perm = [4, 2, 6, 0, 5, 1, 3];
        let permuted = a.gather_columns(&perm).unwrap();
        let original = max_volume_subset(&a, &ColumnSubset::all(7)).unwrap();
        let moved = max_volume_subset(&permuted, &ColumnSubset::all(7)).unwrap();
        let mapped =
            ColumnSubset::from_unsorted_dedup(moved.indices().iter().map(|&j| perm[j]).collect());
        assert_eq!(mapped, original);
    }

    #[test]
    fn capacity_limits() {
        let mut rng = SeededRng::new(5);
        let a = random_low_rank(10, 10, 6, &mut rng).unwrap();
        assert!(matches!(
            max_volume_subset(&a, &ColumnSubset::all(10)),
            Err(Error::Capacity(_))
        ));
        let b = random_low_rank(200, 60, 4, &mut rng).unwrap();
        assert!(matches!(
            max_volume_subset(&b, &ColumnSubset::all(60)),
            Err(Error::Capacity(_))
        ));
        assert!(max_volume_subset(&a, &ColumnSubset::new(vec![11]).unwrap()).is_err());
    }

    #[test]
    fn cramer_examples() {
        let mut rng = SeededRng::new(8);
        let base = random_low_rank(6, 4, 2, &mut rng).unwrap();
        let mut cols = base.columns();
        cols.push(cols[1].clone());
        let dup = DenseMatrix::from_columns(6, &cols).unwrap();
        let subset = ColumnSubset::new(vec![0, 1, 2, 3]).unwrap();
        let v = cramer_fit_check(&dup, &subset, 4).unwrap();
        assert!((v - 1.0).abs() < 1e-12 || v < 1.0, "{v}");

        let mut cols = base.columns();
        cols.push(vec![0.0; 6]);
        let zero = DenseMatrix::from_columns(6, &cols).unwrap();
        assert_eq!(cramer_fit_check(&zero, &subset, 4).unwrap(), 0.0);
        assert!(cramer_fit_check(&zero, &subset, 2).is_err());
    }

    #[test]
    fn cramer_exact_one_for_tied_copy() {
        // Columns 0 and 2 are equal; 2 is fit by 0 with coefficient exactly one.
        let a = DenseMatrix::from_rows(&[vec![2.0, 0.0, 2.0], vec![0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(
            cramer_fit_check(&a, &ColumnSubset::new(vec![0, 1]).unwrap(), 2).unwrap(),
            1.0
        );
    }

    #[test]
    fn cramer_bound_holds_on_random_instances() {
        let r = cramer_trials(30, 3).unwrap();
        assert!(r.all_passed(), "{:?}", r.statistics);
    }

    #[test]
    fn good_tuple_checks() {
        let a = make_synthetic_ground_truth(12, 70, 1, 4).unwrap();
        assert!(good_tuple_fraction(&a, 20, 0, 5, 1).is_err());
        assert!(good_tuple_fraction(&a, 10, 2, 5, 1).is_err());
        assert!(good_tuple_fraction(&a, 20, 4, 5, 1).is_err());
        let r = good_tuple_fraction(&a, 20, 3, 40, 2).unwrap();
        assert_eq!(r.get("rank"), Some(1.0));
        assert!(r.get("fraction").unwrap() >= 0.9);
        assert_eq!(r, good_tuple_fraction(&a, 20, 3, 40, 2).unwrap());
    }
}
