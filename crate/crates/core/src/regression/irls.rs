//! Iteratively reweighted least squares for `min ‖Mx − b‖₁`.
//!
//! The smoothed objective `Σ √(rᵢ² + δ²)` is minimized by repeated weighted
//! least-squares solves with weights `1/√(rᵢ² + δ²)`, for a decreasing
//! sequence of `δ`. After each level the iterate is polished: it is snapped
//! to the basic solution through the rows with the smallest residuals, which
//! then seeds a few basis exchanges toward an optimal vertex.
//!
//! Each level also yields dual certificates: the smoothed signs
//! `yᵢ = rᵢ/√(rᵢ² + δ²)` and the vertex duals, each projected onto the
//! orthogonal complement of `col(M)` and rescaled into the unit box, so that
//! `bᵀy` is a lower bound on the optimum. The ratio of the best cost to the best lower bound bounds the
//! suboptimality and drives both early stopping and the reported estimate.

use super::{check_shapes, residual_cost, RegressionResult};
use crate::error::{Error, Result};
use crate::linalg::{orthonormal_basis, solve_spd_ridged, Lu};
use crate::matrix::{pairwise_abs_sum, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsOptions {
    pub max_levels: usize,
    pub inner_iterations: usize,
    /// Stop once the certified gap falls below this fraction of `ε`.
    pub early_stop_fraction: f64,
    /// Ridge as a fraction of `trace(MᵀWM)`.
    pub relative_ridge: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self {
            max_levels: 12,
            inner_iterations: 5,
            early_stop_fraction: 0.1,
            relative_ridge: 1e-12,
        }
    }
}

/// Smoothed objective after every inner solve, grouped by level.
#[derive(Debug, Clone, Default)]
pub struct IrlsTrace {
    pub levels: Vec<LevelTrace>,
}

#[derive(Debug, Clone)]
pub struct LevelTrace {
    pub delta: f64,
    /// Smoothed objective at the level's starting point, then after each solve.
    pub smoothed: Vec<f64>,
    pub cost: f64,
    pub lower_bound: f64,
}

/// Relative rank tolerance for the column-space basis.
const BASIS_TOL: f64 = 1e-10;
/// Costs below this fraction of `‖b‖₁` count as an exact fit.
const ZERO_COST_TOL: f64 = 1e-12;

/// A design matrix with the data shared by every right-hand side.
pub struct L1Design<'a> {
    m: &'a DenseMatrix,
    basis: Vec<Vec<f64>>,
    options: IrlsOptions,
}

/// Basis exchanges allowed per polish, per design column.
const VERTEX_STEPS_PER_COL: usize = 2;
const REFACTOR_EVERY: usize = 32;

struct Vertex {
    x: Vec<f64>,
    lower: f64,
}

struct Workspace {
    residual: Vec<f64>,
    weights: Vec<f64>,
    gram: Vec<f64>,
    rhs: Vec<f64>,
}

impl<'a> L1Design<'a> {
    pub fn new(m: &'a DenseMatrix) -> Self {
        Self::with_options(m, IrlsOptions::default())
    }

    pub fn with_options(m: &'a DenseMatrix, options: IrlsOptions) -> Self {
        let basis = orthonormal_basis(&m.columns(), BASIS_TOL);
        Self { m, basis, options }
    }

    pub fn design(&self) -> &DenseMatrix {
        self.m
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn solve(&self, b: &[f64], eps: f64) -> Result<RegressionResult> {
        self.solve_inner(b, eps, None, None)
    }

    /// Like [`solve`](Self::solve), but first polishes from `start`; the
    /// IRLS levels run only if that does not certify the gap.
    pub fn solve_from(&self, b: &[f64], eps: f64, start: &[f64]) -> Result<RegressionResult> {
        if start.len() != self.m.cols() {
            return Err(Error::invalid(
                "warm start length must match design columns",
            ));
        }
        self.solve_inner(b, eps, None, Some(start))
    }

    pub fn solve_traced(&self, b: &[f64], eps: f64) -> Result<(RegressionResult, IrlsTrace)> {
        let mut trace = IrlsTrace::default();
        let r = self.solve_inner(b, eps, Some(&mut trace), None)?;
        Ok((r, trace))
    }

    fn residual_into(&self, x: &[f64], b: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.m.row(i);
            let fit: f64 = row.iter().zip(x).map(|(a, c)| a * c).sum();
            *o = b[i] - fit;
        }
    }

    /// Weighted least squares `argmin Σ wᵢ (bᵢ − mᵢᵀx)²`.
    fn weighted_solve(&self, b: &[f64], ws: &mut Workspace) -> Result<Vec<f64>> {
        let d = self.m.cols();
        ws.gram.fill(0.0);
        ws.rhs.fill(0.0);
        for (i, &w) in ws.weights.iter().enumerate() {
            let row = self.m.row(i);
            let wb = w * b[i];
            for a in 0..d {
                let f = w * row[a];
                ws.rhs[a] += wb * row[a];
                let g = &mut ws.gram[a * d..a * d + a + 1];
                for (gv, &mc) in g.iter_mut().zip(&row[..=a]) {
                    *gv += f * mc;
                }
            }
        }
        solve_spd_ridged(&ws.gram, d, &ws.rhs, self.options.relative_ridge)
    }

    /// Rows with the `d` smallest `|r|`, ascending.
    fn smallest_rows(&self, residual: &[f64]) -> Option<Vec<usize>> {
        let (n, d) = self.m.shape();
        if d > n {
            return None;
        }
        let mut order: Vec<usize> = (0..n).collect();
        if d < n {
            order.select_nth_unstable_by(d, |&i, &j| {
                residual[i]
                    .abs()
                    .total_cmp(&residual[j].abs())
                    .then(i.cmp(&j))
            });
        }
        order.truncate(d);
        order.sort_unstable();
        Some(order)
    }

    /// Basis-exchange descent over vertices, starting from the basic
    /// solution through rows `basis`.
    ///
    /// At a vertex the dual vector is `sign(r)` off the basis, with the basic
    /// entries fixed by `Mᵀy = 0`. If every basic entry lies in `[−1, 1]` the
    /// vertex is optimal. Otherwise the row with the largest dual entry is
    /// released and an exact line search along the freed edge picks the row
    /// that enters. The basis inverse is kept explicitly and updated by
    /// Sherman–Morrison, with a fresh inversion every `max(REFACTOR_EVERY, d)`
    /// steps.
    fn vertex_descent(&self, b: &[f64], mut basis: Vec<usize>, max_steps: usize) -> Option<Vertex> {
        let (n, d) = self.m.shape();
        let mut in_basis = vec![false; n];
        for &r in &basis {
            in_basis[r] = true;
        }
        let invert = |basis: &[usize]| {
            let sys: Vec<f64> = basis
                .iter()
                .flat_map(|&r| self.m.row(r).iter().copied())
                .collect();
            Lu::new(sys, d).inverse()
        };
        let refresh = |binv: &[f64], basis: &[usize], x: &mut Vec<f64>, residual: &mut Vec<f64>| {
            for (a, xa) in x.iter_mut().enumerate() {
                *xa = basis
                    .iter()
                    .enumerate()
                    .map(|(p, &r)| binv[a * d + p] * b[r])
                    .sum();
            }
            self.residual_into(x, b, residual);
            for &r in basis {
                residual[r] = 0.0;
            }
        };
        let mut binv = invert(&basis)?;
        let mut residual = vec![0.0; n];
        let mut x = vec![0.0; d];
        refresh(&binv, &basis, &mut x, &mut residual);
        let mut best_x = x.clone();
        let mut best_cost = f64::INFINITY;
        let mut c = vec![0.0; n];
        let mut g = vec![0.0; d];
        let mut y_basis = vec![0.0; d];
        let mut z = vec![0.0; d];
        let mut breaks: Vec<(f64, f64, usize)> = Vec::new();
        for step in 0..=max_steps {
            let cost = pairwise_abs_sum(&residual);
            if cost < best_cost {
                best_cost = cost;
                best_x.copy_from_slice(&x);
            }

            g.fill(0.0);
            for i in (0..n).filter(|&i| !in_basis[i] && residual[i] != 0.0) {
                let sgn = residual[i].signum();
                for (gv, &mv) in g.iter_mut().zip(self.m.row(i)) {
                    *gv -= sgn * mv;
                }
            }
            y_basis.fill(0.0);
            for (a, &ga) in g.iter().enumerate() {
                for (yp, &bv) in y_basis.iter_mut().zip(&binv[a * d..(a + 1) * d]) {
                    *yp += bv * ga;
                }
            }
            let (p, peak) = y_basis.iter().enumerate().fold((0, 0.0f64), |acc, (p, v)| {
                if v.abs() > acc.1 {
                    (p, v.abs())
                } else {
                    acc
                }
            });
            if peak <= 1.0 + 1e-12 || cost > best_cost || step == max_steps {
                break;
            }

            // Edge direction u = σ·B⁻¹e_p moves row p off zero.
            let sigma = -y_basis[p].signum();
            let w: Vec<f64> = (0..d).map(|a| binv[a * d + p]).collect();
            breaks.clear();
            for i in 0..n {
                if in_basis[i] {
                    c[i] = 0.0;
                    continue;
                }
                c[i] = sigma
                    * self
                        .m
                        .row(i)
                        .iter()
                        .zip(&w)
                        .map(|(a, wv)| a * wv)
                        .sum::<f64>();
                if c[i] != 0.0 {
                    let t = residual[i] / c[i];
                    if t > 0.0 {
                        breaks.push((t, 2.0 * c[i].abs(), i));
                    }
                }
            }
            breaks.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.2.cmp(&y.2)));
            let mut slope = 1.0 - peak;
            let (step_len, entering) = breaks.iter().find_map(|&(t, wt, i)| {
                slope += wt;
                (slope >= 0.0).then_some((t, i))
            })?;

            let m_in = self.m.row(entering);
            let denom: f64 = m_in.iter().zip(&w).map(|(a, wv)| a * wv).sum();
            if denom.abs() < 1e-12 {
                break;
            }
            z.fill(0.0);
            for (a, &ma) in m_in.iter().enumerate() {
                for (zc, &bv) in z.iter_mut().zip(&binv[a * d..(a + 1) * d]) {
                    *zc += ma * bv;
                }
            }
            z[p] -= 1.0;
            for a in 0..d {
                let f = w[a] / denom;
                if f != 0.0 {
                    for (bv, &zc) in binv[a * d..(a + 1) * d].iter_mut().zip(&z) {
                        *bv -= f * zc;
                    }
                }
            }
            for (xa, &wa) in x.iter_mut().zip(&w) {
                *xa += step_len * sigma * wa;
            }
            for (ri, &ci) in residual.iter_mut().zip(&c) {
                *ri -= step_len * ci;
            }
            let leaving = basis[p];
            residual[leaving] = -sigma * step_len;
            residual[entering] = 0.0;
            in_basis[leaving] = false;
            in_basis[entering] = true;
            basis[p] = entering;
            if (step + 1) % REFACTOR_EVERY.max(d) == 0 {
                binv = invert(&basis)?;
                refresh(&binv, &basis, &mut x, &mut residual);
            }
        }
        let mut y: Vec<f64> = residual
            .iter()
            .map(|&r| if r == 0.0 { 0.0 } else { r.signum() })
            .collect();
        for (&r, &v) in basis.iter().zip(&y_basis) {
            y[r] = v;
        }
        let lower = self.box_bound(b, y);
        Some(Vertex { x: best_x, lower })
    }

    /// Lower bound `bᵀy` from the smoothed sign vector of `residual`.
    fn lower_bound(&self, b: &[f64], residual: &[f64], delta: f64) -> f64 {
        let y: Vec<f64> = residual
            .iter()
            .map(|&r| r / (r * r + delta * delta).sqrt())
            .collect();
        self.box_bound(b, y)
    }

    /// Projects `y` onto the orthogonal complement of `col(M)`, rescales it
    /// into the unit box and returns `bᵀy`, a valid lower bound by duality.
    fn box_bound(&self, b: &[f64], mut y: Vec<f64>) -> f64 {
        for _ in 0..2 {
            for q in &self.basis {
                let c: f64 = q.iter().zip(&y).map(|(a, b)| a * b).sum();
                for (yi, qi) in y.iter_mut().zip(q) {
                    *yi -= c * qi;
                }
            }
        }
        let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = peak.max(1.0);
        b.iter().zip(&y).map(|(bi, yi)| bi * yi).sum::<f64>() / scale
    }

    fn solve_inner(
        &self,
        b: &[f64],
        eps: f64,
        mut trace: Option<&mut IrlsTrace>,
        start: Option<&[f64]>,
    ) -> Result<RegressionResult> {
        check_shapes(self.m, b)?;
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::invalid(format!(
                "accuracy must lie in (0, 1), got {eps}"
            )));
        }
        let (n, d) = self.m.shape();
        let b_norm = pairwise_abs_sum(b);
        if b_norm == 0.0 {
            return Ok(RegressionResult::exact(vec![0.0; d], 0.0));
        }
        if d == 0 || self.basis.is_empty() {
            return Ok(RegressionResult::exact(vec![0.0; d], b_norm));
        }
        let mut ws = Workspace {
            residual: vec![0.0; n],
            weights: vec![1.0; n],
            gram: vec![0.0; d * d],
            rhs: vec![0.0; d],
        };
        let mut best_x = vec![0.0; d];
        let mut best_cost = b_norm;
        let consider = |x: &[f64], best_x: &mut Vec<f64>, best_cost: &mut f64| {
            let c = residual_cost(self.m, x, b);
            if c < *best_cost {
                *best_cost = c;
                best_x.copy_from_slice(x);
            }
        };

        let zero_tol = ZERO_COST_TOL * b_norm;
        let mut lower = 0.0f64;
        let gap_of = |cost: f64, lower: f64| {
            if cost <= zero_tol {
                0.0
            } else if lower > 0.0 {
                (cost / lower - 1.0).max(0.0)
            } else {
                f64::INFINITY
            }
        };
        let mut gap = f64::INFINITY;
        let max_steps = VERTEX_STEPS_PER_COL * d + 10;

        let mut x = match start {
            Some(x0) => {
                consider(x0, &mut best_x, &mut best_cost);
                self.residual_into(x0, b, &mut ws.residual);
                if let Some(v) = self
                    .smallest_rows(&ws.residual)
                    .and_then(|rows| self.vertex_descent(b, rows, max_steps))
                {
                    consider(&v.x, &mut best_x, &mut best_cost);
                    lower = lower.max(v.lower);
                }
                gap = gap_of(best_cost, lower);
                if gap <= self.options.early_stop_fraction * eps {
                    return Ok(RegressionResult {
                        x: best_x,
                        cost: best_cost,
                        estimate: best_cost * (1.0 + gap),
                        converged: true,
                    });
                }
                x0.to_vec()
            }
            None => self.weighted_solve(b, &mut ws)?,
        };
        consider(&x, &mut best_x, &mut best_cost);

        let mut delta = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for _ in 0..self.options.max_levels {
            let mut smoothed = Vec::new();
            for it in 0..self.options.inner_iterations {
                self.residual_into(&x, b, &mut ws.residual);
                if trace.is_some() && it == 0 {
                    smoothed.push(smoothed_objective(&ws.residual, delta));
                }
                for (w, &r) in ws.weights.iter_mut().zip(&ws.residual) {
                    *w = 1.0 / (r * r + delta * delta).sqrt();
                }
                x = self.weighted_solve(b, &mut ws)?;
                if trace.is_some() {
                    self.residual_into(&x, b, &mut ws.residual);
                    smoothed.push(smoothed_objective(&ws.residual, delta));
                }
            }
            self.residual_into(&x, b, &mut ws.residual);
            let level_cost = pairwise_abs_sum(&ws.residual);
            consider(&x, &mut best_x, &mut best_cost);
            lower = lower.max(self.lower_bound(b, &ws.residual, delta));
            if let Some(v) = self
                .smallest_rows(&ws.residual)
                .and_then(|rows| self.vertex_descent(b, rows, max_steps))
            {
                consider(&v.x, &mut best_x, &mut best_cost);
                lower = lower.max(v.lower);
            }
            let mut best_residual = vec![0.0; n];
            self.residual_into(&best_x, b, &mut best_residual);
            lower = lower.max(self.lower_bound(b, &best_residual, delta));

            gap = gap_of(best_cost, lower);
            if let Some(t) = trace.as_deref_mut() {
                t.levels.push(LevelTrace {
                    delta,
                    smoothed,
                    cost: level_cost,
                    lower_bound: lower,
                });
            }
            if gap <= self.options.early_stop_fraction * eps {
                break;
            }
            delta /= 10.0;
        }
        let converged = gap <= eps;
        let estimate = if converged {
            best_cost * (1.0 + gap)
        } else {
            best_cost * (1.0 + eps)
        };
        Ok(RegressionResult {
            x: best_x,
            cost: best_cost,
            estimate,
            converged,
        })
    }
}

fn smoothed_objective(residual: &[f64], delta: f64) -> f64 {
    residual
        .iter()
        .map(|r| (r * r + delta * delta).sqrt())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothed_objective_is_monotone_within_levels() {
        let mut rng = crate::rng::SeededRng::new(5);
        let m = DenseMatrix::from_fn(40, 4, |_, _| rng.uniform_range(-1.0, 1.0)).unwrap();
        let b: Vec<f64> = (0..40)
            .map(|_| (std::f64::consts::PI * (rng.uniform_open() - 0.5)).tan())
            .collect();
        let design = L1Design::with_options(
            &m,
            IrlsOptions {
                early_stop_fraction: 0.0,
                ..IrlsOptions::default()
            },
        );
        let (_, trace) = design.solve_traced(&b, 0.01).unwrap();
        assert!(!trace.levels.is_empty());
        for level in &trace.levels {
            for w in level.smoothed.windows(2) {
                assert!(
                    w[1] <= w[0] * (1.0 + 1e-12),
                    "{} > {} at delta {}",
                    w[1],
                    w[0],
                    level.delta
                );
            }
        }
    }

    #[test]
    fn lower_bound_never_exceeds_cost() {
        let mut rng = crate::rng::SeededRng::new(6);
        let m = DenseMatrix::from_fn(30, 3, |_, _| rng.uniform_range(-1.0, 1.0)).unwrap();
        let b: Vec<f64> = (0..30).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
        let design = L1Design::new(&m);
        let (r, trace) = design.solve_traced(&b, 0.05).unwrap();
        let exact = crate::regression::l1_regression_exact(&m, &b).unwrap();
        for level in &trace.levels {
            assert!(level.lower_bound <= exact.cost * (1.0 + 1e-9));
        }
        assert!(r.converged);
        assert!(r.cost <= exact.cost * 1.05);
    }
}
