//! Heavy-tailed noise generators.
//!
//! Every sampler is a pure function of `(seed, row, col)`: entry `(i, j)` is
//! produced from two `u64` draws at a fixed position of ChaCha8 stream `i`
//! (see [`crate::rng`]). Same seed and shape always give the same bits.
//!
//! Families:
//! - standard Cauchy, `tan(π(u − ½))`
//! - symmetric α-stable with unit scale, via Chambers–Mallows–Stuck. With
//!   β = 0 the S0 and S1 parameterizations coincide.
//! - signed power of a Cauchy, `sign(C)·|C|^q`
//! - a bounded-moment family for `p ∈ (1, 2)`: a random sign times a
//!   mixture of `Uniform[0, 2]` (weight `1 − w`) and a Lomax law with shape
//!   `a = p + ½` and scale `a − 1` (weight `w = 0.02`). Both components have
//!   mean one, so `E|X| = 1` exactly. The density decays like
//!   `|x|^{−(p + 3/2)}`, giving finite moments of every order below `p + ½`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{entrywise_norm, DenseMatrix};
use crate::rng::{open_unit, row_stream};
use rand::RngCore;
use std::str::FromStr;

/// Weight of the Lomax component in the bounded-moment family.
pub const BOUNDED_TAIL_WEIGHT: f64 = 0.02;
/// Lomax shape minus `p`.
pub const BOUNDED_TAIL_MARGIN: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NoiseFamily {
    Cauchy,
    SymmetricStable {
        alpha: f64,
    },
    SignedPowerCauchy {
        q: f64,
    },
    /// Symmetric, `E|X| = 1`, finite `p`-th moment.
    #[serde(alias = "custom_symmetric")]
    BoundedMoment {
        p: f64,
    },
}

impl NoiseFamily {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseFamily::Cauchy => Ok(()),
            NoiseFamily::SymmetricStable { alpha } if alpha > 0.0 && alpha <= 2.0 => Ok(()),
            NoiseFamily::SymmetricStable { alpha } => Err(Error::invalid(format!(
                "stability index must lie in (0, 2], got {alpha}"
            ))),
            NoiseFamily::SignedPowerCauchy { q } if q > 0.0 && q <= 1.0 => Ok(()),
            NoiseFamily::SignedPowerCauchy { q } => {
                Err(Error::invalid(format!("power must lie in (0, 1], got {q}")))
            }
            NoiseFamily::BoundedMoment { p } if p > 1.0 && p < 2.0 => Ok(()),
            NoiseFamily::BoundedMoment { p } => Err(Error::invalid(format!(
                "moment order must lie in (1, 2), got {p}"
            ))),
        }
    }

    /// Maps two raw draws to one sample.
    #[inline]
    fn transform(&self, w1: u64, w2: u64) -> f64 {
        match *self {
            NoiseFamily::Cauchy => cauchy(w1),
            NoiseFamily::SymmetricStable { alpha } => stable(alpha, w1, w2),
            NoiseFamily::SignedPowerCauchy { q } => {
                let c = cauchy(w1);
                if q == 1.0 {
                    c
                } else {
                    c.signum() * c.abs().powf(q)
                }
            }
            NoiseFamily::BoundedMoment { p } => bounded_moment(p, w1, w2),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            NoiseFamily::Cauchy => "cauchy".into(),
            NoiseFamily::SymmetricStable { alpha } => format!("stable({alpha})"),
            NoiseFamily::SignedPowerCauchy { q } => format!("signed_power_cauchy({q})"),
            NoiseFamily::BoundedMoment { p } => format!("bounded_moment({p})"),
        }
    }
}

/// Parses `cauchy`, `stable:<alpha>`, `signed_power_cauchy:<q>` or
/// `bounded_moment:<p>`.
impl FromStr for NoiseFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, param) = match s.split_once(':') {
            Some((name, value)) => {
                let v = value
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad noise parameter {value:?}")))?;
                (name.trim(), Some(v))
            }
            None => (s.trim(), None),
        };
        let family = match (name, param) {
            ("cauchy", None) => NoiseFamily::Cauchy,
            ("stable", Some(alpha)) => NoiseFamily::SymmetricStable { alpha },
            ("signed_power_cauchy" | "signed_power", Some(q)) => {
                NoiseFamily::SignedPowerCauchy { q }
            }
            ("bounded_moment" | "bounded", Some(p)) => NoiseFamily::BoundedMoment { p },
            _ => return Err(Error::invalid(format!("unknown noise family {s:?}"))),
        };
        family.validate()?;
        Ok(family)
    }
}

#[inline]
fn cauchy(w: u64) -> f64 {
    (std::f64::consts::PI * (open_unit(w) - 0.5)).tan()
}

#[inline]
fn stable(alpha: f64, w1: u64, w2: u64) -> f64 {
    let v = std::f64::consts::PI * (open_unit(w1) - 0.5);
    if alpha == 1.0 {
        return v.tan();
    }
    let w = -open_unit(w2).ln();
    let cos_v = v.cos();
    (alpha * v).sin() / cos_v.powf(1.0 / alpha)
        * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}

#[inline]
fn bounded_moment(p: f64, w1: u64, w2: u64) -> f64 {
    let u = open_unit(w1);
    let sign = if w2 & 1 == 0 { 1.0 } else { -1.0 };
    let magnitude = if open_unit(w2) < BOUNDED_TAIL_WEIGHT {
        let shape = p + BOUNDED_TAIL_MARGIN;
        (shape - 1.0) * (u.powf(-1.0 / shape) - 1.0)
    } else {
        2.0 * u
    };
    sign * magnitude
}

/// Family, multiplicative scale and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub family: NoiseFamily,
    /// Multiplier applied to raw samples; 0 gives a noiseless instance.
    pub scale: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(family: NoiseFamily, scale: f64, seed: u64) -> Self {
        Self {
            family,
            scale,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(Error::invalid(format!(
                "noise scale must be finite and >= 0, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    pub fn sample(&self, rows: usize, cols: usize) -> Result<DenseMatrix> {
        self.validate()?;
        let raw = sample_matrix(self.family, rows, cols, self.seed)?;
        if self.scale == 1.0 {
            Ok(raw)
        } else {
            raw.scale(self.scale)
        }
    }
}

/// Draws `rows × cols` i.i.d. samples; rows are generated in parallel.
pub fn sample_matrix(
    family: NoiseFamily,
    rows: usize,
    cols: usize,
    seed: u64,
) -> Result<DenseMatrix> {
    family.validate()?;
    if rows == 0 || cols == 0 {
        return Err(Error::invalid(format!(
            "noise shape must be positive, got {rows}x{cols}"
        )));
    }
    let mut data = vec![0.0; rows * cols];
    data.par_chunks_mut(cols).enumerate().for_each(|(i, row)| {
        let mut rng = row_stream(seed, i);
        for v in row.iter_mut() {
            let w1 = rng.next_u64();
            let w2 = rng.next_u64();
            *v = family.transform(w1, w2);
        }
    });
    DenseMatrix::new(rows, cols, data)
}

pub fn sample_cauchy_matrix(n: usize, d: usize, seed: u64) -> Result<DenseMatrix> {
    sample_matrix(NoiseFamily::Cauchy, n, d, seed)
}

pub fn sample_stable_matrix(n: usize, d: usize, alpha: f64, seed: u64) -> Result<DenseMatrix> {
    sample_matrix(NoiseFamily::SymmetricStable { alpha }, n, d, seed)
}

pub fn sample_signed_power_cauchy_matrix(
    n: usize,
    d: usize,
    q: f64,
    seed: u64,
) -> Result<DenseMatrix> {
    sample_matrix(NoiseFamily::SignedPowerCauchy { q }, n, d, seed)
}

pub fn sample_bounded_moment_matrix(n: usize, d: usize, p: f64, seed: u64) -> Result<DenseMatrix> {
    sample_matrix(NoiseFamily::BoundedMoment { p }, n, d, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledNoise {
    pub noise: DenseMatrix,
    /// `‖A*‖₁ / (20·rows·cols)`.
    pub factor: f64,
    /// Set when the ground truth is zero, so the noise collapses to zero.
    pub degenerate: bool,
}

/// Rescales raw noise so its size tracks the ground truth:
/// every entry is multiplied by `‖A*‖₁ / (20·rows·cols)`.
pub fn apply_paper_scaling(raw: &DenseMatrix, ground_truth: &DenseMatrix) -> Result<ScaledNoise> {
    if raw.shape() != ground_truth.shape() {
        return Err(Error::invalid(format!(
            "noise shape {:?} differs from ground truth {:?}",
            raw.shape(),
            ground_truth.shape()
        )));
    }
    let (n, d) = raw.shape();
    let factor = entrywise_norm(ground_truth, 1.0)? / (20.0 * n as f64 * d as f64);
    Ok(ScaledNoise {
        noise: raw.scale(factor)?,
        factor,
        degenerate: factor == 0.0,
    })
}
