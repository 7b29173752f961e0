//! Monte-Carlo and brute-force checks of the structural facts behind the
//! noisy column selection analysis.
//!
//! Every check returns a [`LemmaReport`]. Trials draw their randomness from
//! seeds derived from the master seed before any work is dispatched, so a
//! report is reproducible bit-for-bit regardless of thread count.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod combinatorics;
mod hardness;
mod noise_lemmas;

pub use combinatorics::{
    cramer_fit_check, cramer_trials, good_tuple_fraction, max_volume_submatrix, max_volume_subset,
    numerical_rank, MaxVolume, GOOD_TUPLE_FRACTION, MAX_ENUMERATION, MAX_VOLUME_RANK,
};
pub use hardness::{
    check_cauchy_mass_upper, hardness_companion, hardness_experiment, per_column_shifted_cost,
    CAUCHY_MASS_BOUND, CAUCHY_MASS_CONSTANT, HARDNESS_CONSTANT, MAX_HARDNESS_N, MAX_HARDNESS_RANK,
};
pub use noise_lemmas::{
    check_averaging, check_averaging_with, check_good_column_norm, check_noise_lower_bound,
    check_subset_mass, count_heavy_columns, good_column_bound_holds, heavy_columns,
    heavy_threshold, worst_subset_mass, AveragingCoefficients, AveragingMode, HEAVY_CONSTANT,
    SUBSET_MASS_CONSTANT,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lemma_id: String,
    pub seed: u64,
    pub trials: usize,
    pub pass_count: usize,
    pub statistics: BTreeMap<String, f64>,
}

impl LemmaReport {
    pub fn new(lemma_id: impl Into<String>, seed: u64) -> Self {
        Self {
            lemma_id: lemma_id.into(),
            seed,
            trials: 0,
            pass_count: 0,
            statistics: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, pass: bool) {
        self.trials += 1;
        self.pass_count += usize::from(pass);
    }

    pub fn stat(&mut self, name: &str, value: f64) {
        self.statistics.insert(name.to_owned(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.statistics.get(name).copied()
    }

    pub fn pass_fraction(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.pass_count as f64 / self.trials as f64
        }
    }

    pub fn all_passed(&self) -> bool {
        self.pass_count == self.trials
    }

    /// Rejects reports with `pass_count > trials` or non-finite statistics.
    pub fn validate(&self) -> Result<()> {
        if self.pass_count > self.trials {
            return Err(Error::invalid(format!(
                "{}: pass count {} exceeds {} trials",
                self.lemma_id, self.pass_count, self.trials
            )));
        }
        if let Some((name, v)) = self.statistics.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "{}: statistic {name} is {v}",
                self.lemma_id
            )));
        }
        Ok(())
    }

    pub(crate) fn finish(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        crate::matrix::pairwise_sum(values) / values.len() as f64
    }
}

pub(crate) fn min_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::INFINITY, f64::min)
}

pub(crate) fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Least-squares slope of `ys` against `xs`.
pub(crate) fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = mean(xs);
    let my = mean(ys);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}
