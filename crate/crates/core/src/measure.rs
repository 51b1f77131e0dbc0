//! Change-of-measure tools: the translated driver SDE, exponential Girsanov
//! weights, and empirical-CDF comparison of the state law against the
//! transformed translated-driver law.

use crate::model::{ModelError, ModelSpec};
use crate::paths::{sample_wiener, Grid, Path, Seed};
use crate::solver::{solve_fixed_point, SolverConfig, SolverError};
use crate::stats;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("observation time {t} is not a grid node")]
    TimeNotOnGrid { t: f64 },
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
}

/// Right-continuous empirical distribution function.
#[derive(Debug, Clone)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut samples: Vec<f64>) -> Self {
        assert!(!samples.is_empty(), "empty sample");
        samples.sort_by(f64::total_cmp);
        EmpiricalCdf { sorted: samples }
    }

    /// Fraction of samples `<= x`.
    pub fn value(&self, x: f64) -> f64 {
        let count = self.sorted.partition_point(|&s| s <= x);
        count as f64 / self.sorted.len() as f64
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }
}

/// Two-sample Kolmogorov–Smirnov statistic: the largest vertical distance
/// between the two empirical CDFs.
pub fn ks_statistic(xs: &[f64], ys: &[f64]) -> f64 {
    assert!(!xs.is_empty() && !ys.is_empty(), "empty sample");
    let mut xs = xs.to_vec();
    let mut ys = ys.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let m = ys.len() as f64;
    let (mut i, mut j) = (0usize, 0usize);
    let mut statistic = 0.0f64;
    while i < xs.len() && j < ys.len() {
        let current = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= current {
            i += 1;
        }
        while j < ys.len() && ys[j] <= current {
            j += 1;
        }
        statistic = statistic.max((i as f64 / n - j as f64 / m).abs());
    }
    statistic
}

/// Asymptotic two-sample critical value `c(α)·sqrt((n+m)/(n·m))` with
/// `c(α) = sqrt(-ln(α/2)/2)`; at the 1% level and equal sizes this is the
/// familiar `1.63·sqrt(2/n)`.
pub fn ks_critical_value(n: usize, m: usize, alpha: f64) -> f64 {
    assert!(alpha > 0.0 && alpha < 1.0);
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * (((n + m) as f64) / ((n * m) as f64)).sqrt()
}

/// Euler discretization of the translated-driver SDE
/// `w̃_{k+1} = w̃_k - κ(c(w̃_k))Δt + Δw_k`, `w̃_0 = 0`. The state path is then
/// `c(w̃)` in the refinement limit.
pub fn simulate_translated_wiener(model: &ModelSpec, driver: &Path) -> Result<Path, MeasureError> {
    let grid = driver.grid();
    let dt = grid.dt();
    let mut values = Vec::with_capacity(driver.len());
    let mut wt = 0.0;
    values.push(wt);
    for k in 0..grid.steps() {
        let state = model.transform(wt)?;
        wt = wt - model.kernel(state) * dt + (driver.value(k + 1) - driver.value(k));
        values.push(wt);
    }
    Path::new(grid, values)
        .map_err(|_| MeasureError::Model(ModelError::InverseOutOfRange { value: wt }))
}

/// Exponential change-of-measure weight
/// `Λ = exp[-∫ κ∘c(b) db - ½∫ (κ∘c)²(b) dt]` with strictly left-endpoint
/// (Itô) sums for both integrals. Always positive.
pub fn girsanov_weight(model: &ModelSpec, brownian: &Path) -> Result<f64, MeasureError> {
    let grid = brownian.grid();
    let dt = grid.dt();
    let mut db_sum = 0.0;
    let mut dt_sum = 0.0;
    for k in 0..grid.steps() {
        let composed = model.kernel(model.transform(brownian.value(k))?);
        db_sum += composed * (brownian.value(k + 1) - brownian.value(k));
        dt_sum += composed * composed * dt;
    }
    Ok((-db_sum - 0.5 * dt_sum).exp())
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightSummary {
    pub n_samples: usize,
    pub mean: f64,
    pub std_error: f64,
    pub min: f64,
    pub max: f64,
}

impl WeightSummary {
    /// The martingale-property check at Monte-Carlo resolution.
    pub fn mean_is_one_within(&self, sigmas: f64) -> bool {
        (self.mean - 1.0).abs() <= sigmas * self.std_error
    }
}

/// Monte-Carlo mean of the Girsanov weight over independent Brownian paths.
pub fn expected_weight(
    model: &ModelSpec,
    grid: Grid,
    n_samples: usize,
    seed: Seed,
) -> Result<WeightSummary, MeasureError> {
    if n_samples < 100 {
        return Err(MeasureError::TooFewSamples {
            min: 100,
            got: n_samples,
        });
    }
    let weights: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let b = sample_wiener(grid, seed.with_stream(s as u64));
            girsanov_weight(model, &b)
        })
        .collect::<Result<_, _>>()?;
    Ok(WeightSummary {
        n_samples,
        mean: stats::mean(&weights),
        std_error: stats::std_error(&weights),
        min: weights.iter().copied().fold(f64::INFINITY, f64::min),
        max: weights.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct KsReport {
    pub statistic: f64,
    pub critical_value: f64,
    pub alpha: f64,
    pub n_state_samples: usize,
    pub n_translated_samples: usize,
    pub t_observed: f64,
    pub passed: bool,
}

/// Draw the two ensembles compared by [`cdf_comparison`]: the causal
/// solution at the node closest to `t` over independent drivers (streams
/// `0..n`), and the transformed translated driver at the same node over
/// further independent drivers (streams `n..2n`).
pub fn draw_comparison_samples(
    model: &ModelSpec,
    t: f64,
    grid: Grid,
    n_samples: usize,
    seed: Seed,
) -> Result<(Vec<f64>, Vec<f64>), MeasureError> {
    if n_samples < 8 {
        return Err(MeasureError::TooFewSamples {
            min: 8,
            got: n_samples,
        });
    }
    let node = grid.index_of(t).ok_or(MeasureError::TimeNotOnGrid { t })?;
    let config = SolverConfig::default();

    let state_samples: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let w = sample_wiener(grid, seed.with_stream(s as u64));
            solve_fixed_point(model, &w, &config).map(|sol| sol.path.value(node))
        })
        .collect::<Result<_, _>>()?;

    let translated_samples: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let w = sample_wiener(grid, seed.with_stream((n_samples + s) as u64));
            let wt = simulate_translated_wiener(model, &w)?;
            Ok::<f64, MeasureError>(model.transform(wt.value(node))?)
        })
        .collect::<Result<_, _>>()?;

    Ok((state_samples, translated_samples))
}

/// KS record for two comparison ensembles at the 1% level.
pub fn ks_report_from_samples(
    state_samples: &[f64],
    translated_samples: &[f64],
    t_observed: f64,
) -> KsReport {
    let statistic = ks_statistic(state_samples, translated_samples);
    let alpha = 0.01;
    let critical_value =
        ks_critical_value(state_samples.len(), translated_samples.len(), alpha);
    KsReport {
        statistic,
        critical_value,
        alpha,
        n_state_samples: state_samples.len(),
        n_translated_samples: translated_samples.len(),
        t_observed,
        passed: statistic < critical_value,
    }
}

/// Compare the law of the causal solution at time `t` against the
/// transformed translated-driver law at `t` with a two-sample KS test at
/// the 1% level.
pub fn cdf_comparison(
    model: &ModelSpec,
    t: f64,
    grid: Grid,
    n_samples: usize,
    seed: Seed,
) -> Result<(f64, KsReport), MeasureError> {
    let (state_samples, translated_samples) =
        draw_comparison_samples(model, t, grid, n_samples, seed)?;
    let node = grid.index_of(t).ok_or(MeasureError::TimeNotOnGrid { t })?;
    let report = ks_report_from_samples(&state_samples, &translated_samples, grid.node(node));
    Ok((report.statistic, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{catalog_model, CatalogEntry, Phi};
    use crate::paths::{deterministic_path, DeterministicKind};
    use crate::solver::{running_integral, Quadrature};
    use proptest::prelude::*;

    fn hyperbolic() -> ModelSpec {
        catalog_model(&CatalogEntry::Hyperbolic {
            a: 0.0,
            phi: Phi::Atan,
        })
        .unwrap()
    }

    fn zero_kernel() -> ModelSpec {
        catalog_model(&CatalogEntry::Identity).unwrap()
    }

    #[test]
    fn ecdf_is_a_right_continuous_step_function() {
        let cdf = EmpiricalCdf::new(vec![3.0, 1.0, 2.0, 2.0]);
        assert_eq!(cdf.value(0.5), 0.0);
        assert_eq!(cdf.value(1.0), 0.25);
        assert_eq!(cdf.value(1.999), 0.25);
        assert_eq!(cdf.value(2.0), 0.75);
        assert_eq!(cdf.value(10.0), 1.0);
        let sorted = cdf.samples();
        assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn ks_statistic_endpoints() {
        let xs = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(ks_statistic(&xs, &xs), 0.0);
        let ys = vec![10.0, 11.0, 12.0];
        assert_eq!(ks_statistic(&xs, &ys), 1.0);
    }

    #[test]
    fn ks_critical_value_matches_equal_size_shorthand() {
        let n = 10_000;
        let got = ks_critical_value(n, n, 0.01);
        let shorthand = 1.6276 * (2.0 / n as f64).sqrt();
        assert!((got - shorthand).abs() < 1e-4 * shorthand);
    }

    #[test]
    fn translated_driver_with_zero_kernel_is_the_driver() {
        let grid = Grid::new(1.0, 64).unwrap();
        let w = sample_wiener(grid, Seed::new(3));
        let wt = simulate_translated_wiener(&zero_kernel(), &w).unwrap();
        for (a, b) in wt.values().iter().zip(w.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn translated_driver_with_constant_kernel_drifts_linearly() {
        let m = catalog_model(&CatalogEntry::ConstantKernel { kappa0: 0.5 }).unwrap();
        let grid = Grid::new(1.0, 8).unwrap();
        let zero = Path::zero(grid);
        let wt = simulate_translated_wiener(&m, &zero).unwrap();
        for k in 0..=8 {
            assert_eq!(wt.value(k), -0.5 * grid.node(k));
        }
    }

    #[test]
    fn transformed_translated_driver_tracks_the_causal_solution() {
        let m = hyperbolic();
        let fine = Grid::new(1.0, 2048).unwrap();
        let w_fine = sample_wiener(fine, Seed::new(7));
        let mut gaps = Vec::new();
        for n in [256usize, 1024] {
            let w = w_fine.restrict(n).unwrap();
            let sol = solve_fixed_point(&m, &w, &SolverConfig::default()).unwrap();
            let wt = simulate_translated_wiener(&m, &w).unwrap();
            let transformed =
                Path::new(w.grid(), wt.values().iter().map(|&v| v.sinh()).collect()).unwrap();
            gaps.push(sol.path.sup_distance(&transformed));
        }
        assert!(gaps[1] < gaps[0], "gaps {gaps:?}");
    }

    #[test]
    fn girsanov_weight_is_exactly_one_for_zero_kernel() {
        let grid = Grid::new(1.0, 128).unwrap();
        for s in 0..5 {
            let b = sample_wiener(grid, Seed::new(11).with_stream(s));
            assert_eq!(girsanov_weight(&zero_kernel(), &b).unwrap(), 1.0);
        }
    }

    #[test]
    fn girsanov_weight_telescopes_for_constant_kernel() {
        // κ∘c ≡ 0.5 on a dyadic slope-1 path: the sums are exact and
        // Λ = exp(-0.5·b(T) - ½·0.25·T) = exp(-0.625).
        let m = catalog_model(&CatalogEntry::ConstantKernel { kappa0: 0.5 }).unwrap();
        let grid = Grid::new(1.0, 256).unwrap();
        let b = deterministic_path(&DeterministicKind::Linear { slope: 1.0 }, grid).unwrap();
        let lambda = girsanov_weight(&m, &b).unwrap();
        assert_eq!(lambda.to_bits(), (-0.625f64).exp().to_bits());
    }

    #[test]
    fn girsanov_weight_matches_left_sum_oracle() {
        let m = hyperbolic();
        let grid = Grid::new(1.0, 256).unwrap();
        let b = sample_wiener(grid, Seed::new(13));
        let got = girsanov_weight(&m, &b).unwrap();
        // Independent reimplementation of the Itô sums.
        let dt = grid.dt();
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for k in 0..256 {
            let v = b.value(k).sinh().atan();
            s1 += v * (b.value(k + 1) - b.value(k));
            s2 += v * v * dt;
        }
        let expected = (-s1 - 0.5 * s2).exp();
        assert!(
            (got - expected).abs() <= 1e-12 * expected.abs(),
            "got {got}, expected {expected}"
        );
    }

    #[test]
    fn log_weight_respects_the_kernel_bound() {
        let m = hyperbolic();
        let grid = Grid::new(1.0, 128).unwrap();
        let k_bound = m.kernel_bound();
        for s in 0..10 {
            let b = sample_wiener(grid, Seed::new(17).with_stream(s));
            let lambda = girsanov_weight(&m, &b).unwrap();
            assert!(lambda > 0.0);
            let max_db = (0..128)
                .map(|k| (b.value(k + 1) - b.value(k)).abs())
                .fold(0.0f64, f64::max);
            let bound = k_bound * max_db * 128.0 + 0.5 * k_bound * k_bound * grid.horizon();
            assert!(lambda.ln().abs() <= bound);
        }
    }

    #[test]
    fn expected_weight_collapses_for_zero_kernel() {
        let grid = Grid::new(1.0, 32).unwrap();
        let summary = expected_weight(&zero_kernel(), grid, 200, Seed::new(19)).unwrap();
        assert_eq!(summary.mean, 1.0);
        assert_eq!(summary.std_error, 0.0);
        assert_eq!(summary.min, 1.0);
        assert_eq!(summary.max, 1.0);
        assert!(summary.mean_is_one_within(3.0));
        assert!(matches!(
            expected_weight(&zero_kernel(), grid, 10, Seed::new(19)),
            Err(MeasureError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn expected_weight_is_one_for_constant_kernel() {
        // E[exp(-0.5 B(1) - 0.125)] = 1 exactly; check at MC resolution.
        let m = catalog_model(&CatalogEntry::ConstantKernel { kappa0: 0.5 }).unwrap();
        let grid = Grid::new(1.0, 64).unwrap();
        let summary = expected_weight(&m, grid, 20_000, Seed::new(23)).unwrap();
        assert!(
            summary.mean_is_one_within(3.0),
            "mean {} stderr {}",
            summary.mean,
            summary.std_error
        );
        assert!(summary.min > 0.0);
    }

    #[test]
    fn expected_weight_hyperbolic_within_monte_carlo_error() {
        let m = hyperbolic();
        let grid = Grid::new(1.0, 64).unwrap();
        let summary = expected_weight(&m, grid, 20_000, Seed::new(29)).unwrap();
        assert!(
            summary.mean_is_one_within(3.0),
            "mean {} stderr {}",
            summary.mean,
            summary.std_error
        );
    }

    #[test]
    fn reconstructed_driver_reproduces_the_transformed_translation() {
        // Feed w̃ + ∫κ∘c(w̃) back into the solver: the result is c(w̃).
        let m = hyperbolic();
        let grid = Grid::new(1.0, 1024).unwrap();
        let w = sample_wiener(grid, Seed::new(31));
        let wt = simulate_translated_wiener(&m, &w).unwrap();
        let composed: Vec<f64> = wt.values().iter().map(|&v| v.sinh().atan()).collect();
        let q = running_integral(&composed, grid.dt(), Quadrature::Trapezoid);
        let driver = Path::new(
            grid,
            wt.values().iter().zip(&q).map(|(a, b)| a + b).collect(),
        )
        .unwrap();
        let sol = solve_fixed_point(&m, &driver, &SolverConfig::default()).unwrap();
        let target = Path::new(grid, wt.values().iter().map(|&v| v.sinh()).collect()).unwrap();
        let gap = sol.path.sup_distance(&target);
        assert!(gap <= 10.0 * grid.dt(), "gap {gap}");
    }

    #[test]
    fn cdf_comparison_accepts_identical_laws() {
        let grid = Grid::new(1.0, 64).unwrap();
        for s in 0..3 {
            let (stat, report) =
                cdf_comparison(&zero_kernel(), 1.0, grid, 2000, Seed::new(37 + s)).unwrap();
            assert!(report.passed, "seed {s}: stat {stat} vs {}", report.critical_value);
        }
        assert!(matches!(
            cdf_comparison(&zero_kernel(), 0.123, grid, 100, Seed::new(37)),
            Err(MeasureError::TimeNotOnGrid { .. })
        ));
    }

    #[test]
    fn ks_test_distinguishes_different_laws() {
        // Negative control: the hyperbolic state at t = 1 against the raw
        // driver value.
        let m = hyperbolic();
        let grid = Grid::new(1.0, 64).unwrap();
        let seed = Seed::new(41);
        let n = 2000;
        let config = SolverConfig::default();
        let state: Vec<f64> = (0..n)
            .map(|s| {
                let w = sample_wiener(grid, seed.with_stream(s));
                solve_fixed_point(&m, &w, &config).unwrap().path.value(64)
            })
            .collect();
        let raw: Vec<f64> = (n..2 * n)
            .map(|s| sample_wiener(grid, seed.with_stream(s)).value(64))
            .collect();
        let stat = ks_statistic(&state, &raw);
        let critical = ks_critical_value(n as usize, n as usize, 0.01);
        assert!(stat > critical, "stat {stat} should exceed {critical}");
    }

    proptest! {
        #[test]
        fn ks_statistic_matches_brute_force(
            xs in proptest::collection::vec(-5.0f64..5.0, 8..40),
            ys in proptest::collection::vec(-5.0f64..5.0, 8..40),
        ) {
            let fast = ks_statistic(&xs, &ys);
            let fx = EmpiricalCdf::new(xs.clone());
            let fy = EmpiricalCdf::new(ys.clone());
            let brute = xs.iter().chain(&ys)
                .map(|&v| (fx.value(v) - fy.value(v)).abs())
                .fold(0.0f64, f64::max);
            prop_assert!((fast - brute).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&fast));
        }
    }
}
