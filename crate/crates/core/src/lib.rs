//! Entrywise `ℓ1` low-rank approximation by column subset selection.
//!
//! Given `A = A* + Δ` with `A*` of rank `k` and `Δ` i.i.d. heavy-tailed noise,
//! the crate selects a few columns `S` of `A` and fits `min_X ‖A_S X − A‖₁`.
//! It contains the dense matrix core, `ℓ1` regression solvers (an exact LP
//! and a certified reweighted least-squares solver), noise samplers, the
//! selection algorithms, comparison baselines, Monte-Carlo and brute-force
//! checks of the supporting facts, and a seeded experiment runner.
//!
//! ```
//! use l1css::{noisy_lowrank_approx, sample_bounded_moment_matrix, make_synthetic_ground_truth};
//! use l1css::NoisyCssParams;
//!
//! let a_star = make_synthetic_ground_truth(60, 60, 2, 1).unwrap();
//! let a = a_star.add(&sample_bounded_moment_matrix(60, 60, 1.5, 2).unwrap()).unwrap();
//! let params = NoisyCssParams::with_defaults(60, 2, 0.5, 3);
//! let sol = noisy_lowrank_approx(&a, &params).unwrap();
//! assert!(sol.cost <= l1css::entrywise_norm(&a, 1.0).unwrap());
//! ```

pub mod baselines;
pub mod error;
pub mod experiment;
pub mod io;
pub mod lemma_lab;
pub mod linalg;
pub mod matrix;
pub mod noise;
pub mod regression;
pub mod rng;
pub mod selection;

pub use baselines::{
    cauchy_sketch_l1_lowrank, make_synthetic_ground_truth, synthetic_base, truncated_svd, SketchFit,
};
pub use error::{Error, Result};
pub use experiment::{
    emit_report, generate_instance, report_to_csv, run_experiment, Algorithm, CellReport, Dataset,
    ExperimentConfig, ExperimentReport, ReportFormat, RunRecord,
};
pub use io::{load_matrix, read_matrix_dump, write_matrix, MatrixFormat};
pub use lemma_lab::LemmaReport;
pub use matrix::{
    entrywise_norm, frobenius_norm, residual_l1, select_columns, ColumnSubset, DenseMatrix,
};
pub use noise::{
    apply_paper_scaling, sample_bounded_moment_matrix, sample_cauchy_matrix,
    sample_signed_power_cauchy_matrix, sample_stable_matrix, NoiseFamily, NoiseSpec, ScaledNoise,
};
pub use regression::{
    l1_regression_approx, l1_regression_exact, l1_regression_multi, RegressionResult,
};
pub use rng::{derive_seed, SeededRng};
pub use selection::{
    bicriteria_css, median_heuristic, noisy_lowrank_approx, uniform_css, CssSolution, MedianFit,
    NoisyCssParams,
};
