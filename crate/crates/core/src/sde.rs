//! Reference strong SDE schemes driven by a given discrete Wiener path.
//!
//! These are the independent side of the equivalence check: the causal
//! fixed-point construction and a classical scheme consume the same
//! Brownian increments, and their pathwise gap must vanish under grid
//! refinement.

use crate::model::ModelSpec;
use crate::paths::{sample_wiener, Grid, Path, PathError, Seed};
use crate::solver::{solve_fixed_point, SolverConfig};
use crate::stats;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// Default guard against runaway trajectories.
pub const DEFAULT_BLOWUP_GUARD: f64 = 1e8;

#[derive(Debug, Error)]
pub enum SdeError {
    #[error("paths live on different grids")]
    GridMismatch,
    #[error("scheme blew up at node {node}: |x| = {value:.3e} exceeds guard {guard:.1e}")]
    NumericalBlowup { node: usize, value: f64, guard: f64 },
    #[error("step counts must be increasing and each must divide the finest one")]
    InvalidRefinement,
    #[error("a convergence study needs at least two step counts to fit a slope")]
    StudyTooSmall,
    #[error(transparent)]
    Path(#[from] PathError),
}

/// Euler–Maruyama: `x_{k+1} = x_k + f(x_k)Δt + g(x_k)Δw_k`.
pub fn euler_maruyama(model: &ModelSpec, driver: &Path, x0: f64) -> Result<Path, SdeError> {
    euler_maruyama_guarded(model, driver, x0, DEFAULT_BLOWUP_GUARD)
}

pub fn euler_maruyama_guarded(
    model: &ModelSpec,
    driver: &Path,
    x0: f64,
    guard: f64,
) -> Result<Path, SdeError> {
    let grid = driver.grid();
    let dt = grid.dt();
    let mut values = Vec::with_capacity(driver.len());
    values.push(x0);
    let mut x = x0;
    for k in 0..grid.steps() {
        let dw = driver.value(k + 1) - driver.value(k);
        x = x + model.drift(x) * dt + model.diffusion(x) * dw;
        check_guard(x, k + 1, guard)?;
        values.push(x);
    }
    Ok(Path::new(grid, values).expect("guarded values are finite"))
}

/// Milstein: the Euler step plus the correction
/// `½ g(x_k) g'(x_k) ((Δw_k)² - Δt)`.
pub fn milstein(model: &ModelSpec, driver: &Path, x0: f64) -> Result<Path, SdeError> {
    milstein_guarded(model, driver, x0, DEFAULT_BLOWUP_GUARD)
}

pub fn milstein_guarded(
    model: &ModelSpec,
    driver: &Path,
    x0: f64,
    guard: f64,
) -> Result<Path, SdeError> {
    let grid = driver.grid();
    let dt = grid.dt();
    let mut values = Vec::with_capacity(driver.len());
    values.push(x0);
    let mut x = x0;
    for k in 0..grid.steps() {
        let dw = driver.value(k + 1) - driver.value(k);
        let g = model.diffusion(x);
        x = x + model.drift(x) * dt + g * dw + 0.5 * g * model.diffusion_prime(x) * (dw * dw - dt);
        check_guard(x, k + 1, guard)?;
        values.push(x);
    }
    Ok(Path::new(grid, values).expect("guarded values are finite"))
}

fn check_guard(x: f64, node: usize, guard: f64) -> Result<(), SdeError> {
    if !x.is_finite() || x.abs() > guard {
        return Err(SdeError::NumericalBlowup {
            node,
            value: x,
            guard,
        });
    }
    Ok(())
}

/// Pathwise (strong) error `max_k |x(t_k) - y(t_k)|`.
pub fn strong_error(x: &Path, y: &Path) -> Result<f64, SdeError> {
    if x.grid() != y.grid() {
        return Err(SdeError::GridMismatch);
    }
    Ok(x.sup_distance(y))
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub steps: usize,
    pub dt: f64,
    pub mean_error: f64,
    pub max_error: f64,
    pub paths_used: usize,
    pub failures: usize,
}

/// Strong errors between the causal construction and Euler–Maruyama on a
/// ladder of grids sharing the same Brownian paths.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log(mean error)` against `log(Δt)`; ~0.5 for
    /// Euler–Maruyama-dominated error.
    pub slope: f64,
}

impl ConvergenceTable {
    /// True when errors shrink strictly with refinement (exact agreement at
    /// machine scale also counts).
    pub fn errors_decrease(&self) -> bool {
        self.all_errors_negligible()
            || self
                .rows
                .windows(2)
                .all(|w| w[1].mean_error < w[0].mean_error)
    }

    pub fn all_errors_negligible(&self) -> bool {
        self.rows.iter().all(|r| r.mean_error <= 1e-14)
    }
}

/// Run the equivalence study: for each step count, restrict the shared
/// finest-grid Wiener paths, solve the fixed point, run Euler–Maruyama from
/// `c(0)` on the same increments, and record strong errors. Solver failures
/// abort the affected path and are counted per row.
pub fn convergence_study(
    model: &ModelSpec,
    horizon: f64,
    step_counts: &[usize],
    n_paths: usize,
    seed: Seed,
) -> Result<ConvergenceTable, SdeError> {
    if step_counts.len() < 2 {
        return Err(SdeError::StudyTooSmall);
    }
    let finest = *step_counts.last().unwrap();
    let ascending = step_counts.windows(2).all(|w| w[0] < w[1]);
    if !ascending || step_counts.iter().any(|&n| n == 0 || !finest.is_multiple_of(n)) {
        return Err(SdeError::InvalidRefinement);
    }
    let fine_grid = Grid::new(horizon, finest)?;
    let config = SolverConfig::default();

    // One error row per path and step count; paths are embarrassingly
    // parallel, aggregation stays sequential and deterministic.
    let per_path: Vec<Vec<Option<f64>>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let w_fine = sample_wiener(fine_grid, seed.with_stream(p as u64));
            step_counts
                .iter()
                .map(|&n| {
                    let w = w_fine.restrict(n).ok()?;
                    let causal = solve_fixed_point(model, &w, &config).ok()?;
                    let euler = euler_maruyama(model, &w, model.x0()).ok()?;
                    strong_error(&causal.path, &euler).ok()
                })
                .collect()
        })
        .collect();

    let mut rows = Vec::with_capacity(step_counts.len());
    for (i, &n) in step_counts.iter().enumerate() {
        let errors: Vec<f64> = per_path.iter().filter_map(|row| row[i]).collect();
        let failures = n_paths - errors.len();
        let (mean_error, max_error) = if errors.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (
                stats::mean(&errors),
                errors.iter().fold(0.0f64, |m, &e| m.max(e)),
            )
        };
        rows.push(ConvergenceRow {
            steps: n,
            dt: horizon / n as f64,
            mean_error,
            max_error,
            paths_used: errors.len(),
            failures,
        });
    }

    let log_dt: Vec<f64> = rows.iter().map(|r| r.dt.ln()).collect();
    let log_err: Vec<f64> = rows
        .iter()
        .map(|r| r.mean_error.max(1e-300).ln())
        .collect();
    let slope = stats::ls_slope(&log_dt, &log_err);
    Ok(ConvergenceTable { rows, slope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{catalog_model, CatalogEntry, ModelSpec, Phi};
    use std::sync::Arc;

    fn hyperbolic() -> ModelSpec {
        catalog_model(&CatalogEntry::Hyperbolic {
            a: 0.0,
            phi: Phi::Atan,
        })
        .unwrap()
    }

    #[test]
    fn unit_diffusion_reproduces_the_driver() {
        let grid = Grid::new(1.0, 64).unwrap();
        let w = sample_wiener(grid, Seed::new(7));
        let m = catalog_model(&CatalogEntry::Identity).unwrap();
        let x = euler_maruyama(&m, &w, 0.0).unwrap();
        for (a, b) in x.values().iter().zip(w.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn pure_drift_integrates_exactly() {
        // f ≡ 1, g ≡ 0: x_n = T exactly on a dyadic grid.
        let m = ModelSpec::from_parts(
            "pure-drift",
            Arc::new(|_| 1.0),
            Arc::new(|_| 0.0),
            Arc::new(|_| 0.0),
            Arc::new(|x| x),
            Arc::new(|y| y),
            Arc::new(|_| 0.0),
            0.0,
            0.0,
            (f64::NEG_INFINITY, f64::INFINITY),
        );
        let grid = Grid::new(1.0, 64).unwrap();
        let w = sample_wiener(grid, Seed::new(11));
        let x = euler_maruyama(&m, &w, 0.0).unwrap();
        assert_eq!(x.value(64), 1.0);
    }

    #[test]
    fn euler_matches_hand_rolled_recurrence() {
        let m = hyperbolic();
        let grid = Grid::new(1.0, 256).unwrap();
        let w = sample_wiener(grid, Seed::new(13));
        let x = euler_maruyama(&m, &w, m.x0()).unwrap();
        // Independent reimplementation of the recurrence.
        let dt = grid.dt();
        let mut state = 0.0f64;
        for k in 0..256 {
            let drift = state / 2.0 - state.atan() * (1.0 + state * state).sqrt();
            let diffusion = (1.0 + state * state).sqrt();
            state = state + drift * dt + diffusion * (w.value(k + 1) - w.value(k));
            assert_eq!(x.value(k + 1).to_bits(), state.to_bits(), "node {}", k + 1);
        }
    }

    #[test]
    fn milstein_equals_euler_for_constant_diffusion() {
        let m = catalog_model(&CatalogEntry::ConstantKernel { kappa0: 0.4 }).unwrap();
        let grid = Grid::new(1.0, 128).unwrap();
        let w = sample_wiener(grid, Seed::new(17));
        let e = euler_maruyama(&m, &w, 0.0).unwrap();
        let mil = milstein(&m, &w, 0.0).unwrap();
        for (a, b) in e.values().iter().zip(mil.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn milstein_single_step_formula() {
        // f ≡ 0, g(x) = x: one step from 1 gives 1 + d + ½(d² - Δt).
        let m = ModelSpec::from_parts(
            "geometric",
            Arc::new(|_| 0.0),
            Arc::new(|x| x),
            Arc::new(|_| 1.0),
            Arc::new(|x: f64| x.exp()),
            Arc::new(|y: f64| y.ln()),
            Arc::new(|_| 0.5),
            0.5,
            0.0,
            (f64::NEG_INFINITY, f64::INFINITY),
        );
        let grid = Grid::new(0.25, 1).unwrap();
        let d = 0.3;
        let w = Path::new(grid, vec![0.0, d]).unwrap();
        let x = milstein(&m, &w, 1.0).unwrap();
        let expected = 1.0 + d + 0.5 * (d * d - 0.25);
        assert!((x.value(1) - expected).abs() < 1e-15);
    }

    #[test]
    fn milstein_beats_euler_against_dense_reference() {
        let m = hyperbolic();
        let coarse_n = 256;
        let fine_n = 65_536;
        let grid = Grid::new(1.0, fine_n).unwrap();
        let mut milstein_wins = 0;
        let total = 100;
        for s in 0..total {
            let w_fine = sample_wiener(grid, Seed::new(19).with_stream(s));
            let reference = euler_maruyama(&m, &w_fine, m.x0())
                .unwrap()
                .restrict(coarse_n)
                .unwrap();
            let w = w_fine.restrict(coarse_n).unwrap();
            let e = euler_maruyama(&m, &w, m.x0()).unwrap();
            let mil = milstein(&m, &w, m.x0()).unwrap();
            let err_euler = strong_error(&e, &reference).unwrap();
            let err_milstein = strong_error(&mil, &reference).unwrap();
            if err_milstein < err_euler {
                milstein_wins += 1;
            }
        }
        assert!(milstein_wins >= 90, "milstein wins {milstein_wins}/{total}");
    }

    #[test]
    fn strong_error_is_the_sup_distance() {
        let grid = Grid::new(1.0, 16).unwrap();
        let a = sample_wiener(grid, Seed::new(23));
        assert_eq!(strong_error(&a, &a).unwrap(), 0.0);
        let b = Path::new(grid, a.values().iter().map(|v| v + 0.1).collect()).unwrap();
        assert!((strong_error(&a, &b).unwrap() - 0.1).abs() < 1e-15);
        // Direct scan oracle on two independent solver outputs.
        let c = sample_wiener(grid, Seed::new(23).with_stream(1));
        let brute = a
            .values()
            .iter()
            .zip(c.values())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        assert_eq!(strong_error(&a, &c).unwrap(), brute);
        let other = sample_wiener(Grid::new(1.0, 8).unwrap(), Seed::new(23));
        assert!(matches!(
            strong_error(&a, &other),
            Err(SdeError::GridMismatch)
        ));
    }

    #[test]
    fn blowup_is_guarded() {
        let m = ModelSpec::from_parts(
            "cubic-drift",
            Arc::new(|x: f64| x * x * x),
            Arc::new(|_| 0.0),
            Arc::new(|_| 0.0),
            Arc::new(|x| x),
            Arc::new(|y| y),
            Arc::new(|_| 0.0),
            0.0,
            0.0,
            (f64::NEG_INFINITY, f64::INFINITY),
        );
        let grid = Grid::new(1.0, 32).unwrap();
        let w = Path::zero(grid);
        assert!(matches!(
            euler_maruyama(&m, &w, 50.0),
            Err(SdeError::NumericalBlowup { .. })
        ));
    }

    #[test]
    fn identity_study_is_exact_and_bad_ladders_are_rejected(){
        let m = catalog_model(&CatalogEntry::Identity).unwrap();
        let table = convergence_study(&m, 1.0, &[16, 32, 64], 20, Seed::new(29)).unwrap();
        for row in &table.rows {
            // Both methods reproduce the driver; only increment re-summation
            // roundoff separates them.
            assert!(row.mean_error <= 1e-15, "mean {}", row.mean_error);
            assert_eq!(row.failures, 0);
        }
        assert!(table.errors_decrease());
        assert!(table.all_errors_negligible());

        assert!(matches!(
            convergence_study(&m, 1.0, &[64], 5, Seed::new(1)),
            Err(SdeError::StudyTooSmall)
        ));
        assert!(matches!(
            convergence_study(&m, 1.0, &[48, 64], 5, Seed::new(1)),
            Err(SdeError::InvalidRefinement)
        ));
        assert!(matches!(
            convergence_study(&m, 1.0, &[64, 32], 5, Seed::new(1)),
            Err(SdeError::InvalidRefinement)
        ));
    }

    #[test]
    fn small_scale_study_shows_decay() {
        let m = hyperbolic();
        let table = convergence_study(&m, 1.0, &[32, 64, 128, 256], 60, Seed::new(31)).unwrap();
        assert!(table.errors_decrease(), "{table:?}");
        assert!(table.slope > 0.3, "slope {}", table.slope);
    }
}
