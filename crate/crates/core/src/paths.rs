//! Time grids, discretized paths, and reproducible path generators.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest grid accepted by the dense-factorization fBm generator.
pub const MAX_FBM_STEPS: usize = 4096;

#[derive(Debug, Error)]
pub enum PathError {
    #[error("grid requires horizon > 0 and at least one step, got T={horizon}, n={steps}")]
    InvalidGrid { horizon: f64, steps: usize },
    #[error("path has {values} values but the grid has {nodes} nodes")]
    LengthMismatch { values: usize, nodes: usize },
    #[error("path value at node {index} is not finite")]
    NonFiniteValue { index: usize },
    #[error("coarse step count {coarse} does not divide fine step count {fine}")]
    IncompatibleRefinement { coarse: usize, fine: usize },
    #[error("Hurst index must lie in (0,1), got {0}")]
    InvalidHurst(f64),
    #[error("fBm covariance factorization failed; smallest eigenvalue {min_eigenvalue:.3e}")]
    FactorizationFailure { min_eigenvalue: f64 },
    #[error("dense fBm generation supports at most {max} steps, got {steps}")]
    GridTooLarge { steps: usize, max: usize },
    #[error("piecewise-linear knots must be nonempty, sorted, and inside [0, T]")]
    InvalidKnots,
}

/// Uniform discretization of `[0, T]` with `n` steps (`n + 1` nodes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    horizon: f64,
    steps: usize,
}

impl Grid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self, PathError> {
        if horizon <= 0.0 || !horizon.is_finite() || steps == 0 {
            return Err(PathError::InvalidGrid { horizon, steps });
        }
        Ok(Grid { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn num_nodes(&self) -> usize {
        self.steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Node `t_k = T·(k/n)`; exact at both endpoints.
    pub fn node(&self, k: usize) -> f64 {
        self.horizon * (k as f64 / self.steps as f64)
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |k| self.node(k))
    }

    /// Index of the node closest to `t`, provided `t` lies on the grid to
    /// within a relative tolerance of 1e-9.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = (t / self.dt()).round();
        if k < 0.0 || k > self.steps as f64 {
            return None;
        }
        let k = k as usize;
        let tol = 1e-9 * self.horizon.max(1.0);
        if (self.node(k) - t).abs() <= tol {
            Some(k)
        } else {
            None
        }
    }
}

/// A real-valued function sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    grid: Grid,
    values: Vec<f64>,
}

impl Path {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, PathError> {
        if values.len() != grid.num_nodes() {
            return Err(PathError::LengthMismatch {
                values: values.len(),
                nodes: grid.num_nodes(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(PathError::NonFiniteValue { index });
        }
        Ok(Path { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self, PathError> {
        let values = grid.nodes().map(f).collect();
        Path::new(grid, values)
    }

    pub fn zero(grid: Grid) -> Self {
        Path {
            grid,
            values: vec![0.0; grid.num_nodes()],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest pointwise distance to another path on the same grid.
    pub fn sup_distance(&self, other: &Path) -> f64 {
        assert_eq!(self.len(), other.len(), "paths on different grids");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Exact restriction onto a coarser grid with `coarse_steps` steps.
    /// No re-simulation: node values are shared with the fine path.
    pub fn restrict(&self, coarse_steps: usize) -> Result<Path, PathError> {
        if coarse_steps == 0 || !self.grid.steps.is_multiple_of(coarse_steps) {
            return Err(PathError::IncompatibleRefinement {
                coarse: coarse_steps,
                fine: self.grid.steps,
            });
        }
        let stride = self.grid.steps / coarse_steps;
        let values = self.values.iter().step_by(stride).copied().collect();
        Path::new(Grid::new(self.grid.horizon, coarse_steps)?, values)
    }
}

/// Seed plus a stream id: independent substreams of one experiment seed.
/// Identical `(seed, stream, grid)` always reproduces a path bit-for-bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seed {
    pub seed: u64,
    pub stream: u64,
}

impl Seed {
    pub fn new(seed: u64) -> Self {
        Seed { seed, stream: 0 }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        Seed {
            seed: self.seed,
            stream,
        }
    }

    pub fn rng(self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Standard Wiener path: `w(0) = 0`, independent `N(0, Δt)` increments.
pub fn sample_wiener(grid: Grid, seed: Seed) -> Path {
    let mut rng = seed.rng();
    let sd = grid.dt().sqrt();
    let mut values = Vec::with_capacity(grid.num_nodes());
    values.push(0.0);
    let mut w = 0.0;
    for _ in 0..grid.steps() {
        let z: f64 = StandardNormal.sample(&mut rng);
        w += sd * z;
        values.push(w);
    }
    Path { grid, values }
}

/// Exact-law fractional Brownian motion sampler.
///
/// Factorizes the dense covariance `R(s,t) = ½(s^{2H} + t^{2H} - |t-s|^{2H})`
/// over the interior grid nodes once; each call to [`FbmSampler::sample`]
/// then costs one matrix-vector product. Use this (rather than repeated
/// [`sample_fbm`] calls) for ensembles.
pub struct FbmSampler {
    grid: Grid,
    hurst: f64,
    factor: DMatrix<f64>,
}

impl FbmSampler {
    pub fn new(grid: Grid, hurst: f64) -> Result<Self, PathError> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(PathError::InvalidHurst(hurst));
        }
        if grid.steps() > MAX_FBM_STEPS {
            return Err(PathError::GridTooLarge {
                steps: grid.steps(),
                max: MAX_FBM_STEPS,
            });
        }
        let n = grid.steps();
        let two_h = 2.0 * hurst;
        let cov = DMatrix::from_fn(n, n, |i, j| {
            let s = grid.node(i + 1);
            let t = grid.node(j + 1);
            0.5 * (s.powf(two_h) + t.powf(two_h) - (t - s).abs().powf(two_h))
        });
        match cov.clone().cholesky() {
            Some(chol) => Ok(FbmSampler {
                grid,
                hurst,
                factor: chol.l(),
            }),
            None => {
                let min_eigenvalue = cov
                    .symmetric_eigen()
                    .eigenvalues
                    .iter()
                    .fold(f64::INFINITY, |m, &e| m.min(e));
                Err(PathError::FactorizationFailure { min_eigenvalue })
            }
        }
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn sample(&self, seed: Seed) -> Path {
        let mut rng = seed.rng();
        let n = self.grid.steps();
        let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let b = &self.factor * z;
        let mut values = Vec::with_capacity(n + 1);
        values.push(0.0);
        values.extend(b.iter());
        Path {
            grid: self.grid,
            values,
        }
    }
}

/// One-shot fBm path; factorizes the covariance on every call.
pub fn sample_fbm(grid: Grid, hurst: f64, seed: Seed) -> Result<Path, PathError> {
    Ok(FbmSampler::new(grid, hurst)?.sample(seed))
}

/// Deterministic test drivers. The fixed-point construction works for any
/// continuous driver, which makes fully reproducible non-random tests
/// possible; see also [`Path::from_fn`] for sampled functions.
#[derive(Debug, Clone, PartialEq)]
pub enum DeterministicKind {
    Zero,
    Linear { slope: f64 },
    PiecewiseLinear { knots: Vec<(f64, f64)> },
}

pub fn deterministic_path(kind: &DeterministicKind, grid: Grid) -> Result<Path, PathError> {
    match kind {
        DeterministicKind::Zero => Ok(Path::zero(grid)),
        DeterministicKind::Linear { slope } => Path::from_fn(grid, |t| slope * t),
        DeterministicKind::PiecewiseLinear { knots } => {
            let sorted = knots.windows(2).all(|w| w[0].0 <= w[1].0);
            let inside = knots
                .iter()
                .all(|&(t, _)| (0.0..=grid.horizon()).contains(&t));
            if knots.is_empty() || !sorted || !inside {
                return Err(PathError::InvalidKnots);
            }
            Path::from_fn(grid, |t| eval_piecewise(knots, t))
        }
    }
}

fn eval_piecewise(knots: &[(f64, f64)], t: f64) -> f64 {
    if t <= knots[0].0 {
        return knots[0].1;
    }
    if t >= knots[knots.len() - 1].0 {
        return knots[knots.len() - 1].1;
    }
    let i = knots.partition_point(|&(kt, _)| kt <= t);
    let (t0, v0) = knots[i - 1];
    let (t1, v1) = knots[i];
    if t1 == t0 {
        return v1;
    }
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;
    use proptest::prelude::*;
    use rayon::prelude::*;

    #[test]
    fn grid_endpoints_are_exact() {
        let grid = Grid::new(0.7, 3).unwrap();
        assert_eq!(grid.node(0), 0.0);
        assert_eq!(grid.node(3), 0.7);
        assert!(Grid::new(0.0, 4).is_err());
        assert!(Grid::new(1.0, 0).is_err());
    }

    #[test]
    fn wiener_is_deterministic_per_seed() {
        let grid = Grid::new(1.0, 64).unwrap();
        let a = sample_wiener(grid, Seed::new(7).with_stream(3));
        let b = sample_wiener(grid, Seed::new(7).with_stream(3));
        assert_eq!(a.values(), b.values());
        let c = sample_wiener(grid, Seed::new(7).with_stream(4));
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn wiener_terminal_moments() {
        let grid = Grid::new(1.0, 256).unwrap();
        let n = 100_000u64;
        let finals: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|s| {
                let w = sample_wiener(grid, Seed::new(11).with_stream(s));
                w.value(256)
            })
            .collect();
        let mean = stats::mean(&finals);
        let var = stats::variance(&finals);
        assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn wiener_covariance_matches_min_rule() {
        // Cov(w(0.5), w(1.0)) = min(0.5, 1.0) = 0.5, estimated brute force.
        let grid = Grid::new(1.0, 128).unwrap();
        let n = 100_000u64;
        let pairs: Vec<(f64, f64)> = (0..n)
            .into_par_iter()
            .map(|s| {
                let w = sample_wiener(grid, Seed::new(13).with_stream(s));
                (w.value(64), w.value(128))
            })
            .collect();
        let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let cov = stats::covariance(&xs, &ys);
        assert!((cov - 0.5).abs() < 0.02, "cov {cov}");
    }

    #[test]
    fn wiener_increment_kurtosis_is_gaussian() {
        let grid = Grid::new(1.0, 64).unwrap();
        let mut incs = Vec::new();
        for s in 0..2000u64 {
            let w = sample_wiener(grid, Seed::new(17).with_stream(s));
            for k in 0..64 {
                incs.push(w.value(k + 1) - w.value(k));
            }
        }
        let m = stats::mean(&incs);
        let v = stats::variance(&incs);
        let m4 = stats::mean(&incs.iter().map(|x| (x - m).powi(4)).collect::<Vec<_>>());
        let kurtosis = m4 / (v * v);
        assert!((kurtosis - 3.0).abs() < 0.2, "kurtosis {kurtosis}");
    }

    #[test]
    fn paths_validate_length_and_finiteness() {
        let grid = Grid::new(1.0, 4).unwrap();
        assert!(matches!(
            Path::new(grid, vec![0.0; 4]),
            Err(PathError::LengthMismatch { values: 4, nodes: 5 })
        ));
        assert!(matches!(
            Path::new(grid, vec![0.0, 1.0, f64::NAN, 2.0, 3.0]),
            Err(PathError::NonFiniteValue { index: 2 })
        ));
    }

    #[test]
    fn grid_index_lookup() {
        let grid = Grid::new(2.0, 8).unwrap();
        assert_eq!(grid.index_of(0.0), Some(0));
        assert_eq!(grid.index_of(0.5), Some(2));
        assert_eq!(grid.index_of(2.0), Some(8));
        assert_eq!(grid.index_of(0.3), None);
        assert_eq!(grid.index_of(-0.25), None);
        assert_eq!(grid.index_of(2.25), None);
    }

    #[test]
    fn fbm_sampler_is_deterministic_per_seed() {
        let grid = Grid::new(1.0, 32).unwrap();
        let sampler = FbmSampler::new(grid, 0.7).unwrap();
        let a = sampler.sample(Seed::new(5).with_stream(2));
        let b = sampler.sample(Seed::new(5).with_stream(2));
        assert_eq!(a.values(), b.values());
        let c = sampler.sample(Seed::new(5).with_stream(3));
        assert_ne!(a.values(), c.values());
        // One-shot generation agrees with the cached factorization.
        let d = sample_fbm(grid, 0.7, Seed::new(5).with_stream(2)).unwrap();
        assert_eq!(a.values(), d.values());
    }

    #[test]
    fn fbm_rejects_bad_hurst_and_large_grids() {
        let grid = Grid::new(1.0, 32).unwrap();
        assert!(matches!(
            sample_fbm(grid, 0.0, Seed::new(1)),
            Err(PathError::InvalidHurst(_))
        ));
        assert!(matches!(
            sample_fbm(grid, 1.0, Seed::new(1)),
            Err(PathError::InvalidHurst(_))
        ));
        let big = Grid::new(1.0, MAX_FBM_STEPS + 1).unwrap();
        assert!(matches!(
            sample_fbm(big, 0.5, Seed::new(1)),
            Err(PathError::GridTooLarge { .. })
        ));
    }

    #[test]
    fn fbm_marginal_variance_matches_power_law() {
        // Var B^H(1) = 1^{2H} = 1 and Cov(B^H(0.5), B^H(1)) = ½(0.5^{2H} + 1 - 0.5^{2H}) = 0.5.
        let grid = Grid::new(1.0, 64).unwrap();
        let sampler = FbmSampler::new(grid, 0.75).unwrap();
        let n = 20_000u64;
        let pairs: Vec<(f64, f64)> = (0..n)
            .into_par_iter()
            .map(|s| {
                let b = sampler.sample(Seed::new(23).with_stream(s));
                (b.value(32), b.value(64))
            })
            .collect();
        let half: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let full: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let var = stats::variance(&full);
        let cov = stats::covariance(&half, &full);
        assert!((var - 1.0).abs() < 0.05, "var {var}");
        assert!((cov - 0.5).abs() < 0.03, "cov {cov}");
    }

    #[test]
    fn fbm_half_matches_wiener_increment_structure() {
        // At H = 1/2 the covariance reduces to min(s,t): increments are
        // uncorrelated and the marginal variance grows linearly. Pathwise
        // coupling with sample_wiener is not expected.
        let grid = Grid::new(1.0, 32).unwrap();
        let sampler = FbmSampler::new(grid, 0.5).unwrap();
        let n = 20_000u64;
        let rows: Vec<(f64, f64, f64)> = (0..n)
            .into_par_iter()
            .map(|s| {
                let b = sampler.sample(Seed::new(29).with_stream(s));
                let d1 = b.value(8) - b.value(0);
                let d2 = b.value(16) - b.value(8);
                (d1, d2, b.value(32))
            })
            .collect();
        let d1: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let d2: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let terminal: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let cov = stats::covariance(&d1, &d2);
        assert!(cov.abs() < 0.01, "increment cov {cov}");
        let var = stats::variance(&terminal);
        assert!((var - 1.0).abs() < 0.05, "terminal var {var}");
        assert!((stats::variance(&d1) - 0.25).abs() < 0.02);
    }

    #[test]
    fn deterministic_kinds_evaluate_exactly() {
        let grid = Grid::new(1.0, 4).unwrap();
        let zero = deterministic_path(&DeterministicKind::Zero, grid).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));

        let lin = deterministic_path(&DeterministicKind::Linear { slope: 1.0 }, grid).unwrap();
        for k in 0..=4 {
            assert_eq!(lin.value(k), grid.node(k));
        }

        let pw = deterministic_path(
            &DeterministicKind::PiecewiseLinear {
                knots: vec![(0.0, 0.0), (0.5, 1.0), (1.0, 0.0)],
            },
            grid,
        )
        .unwrap();
        assert_eq!(pw.value(1), 0.5); // t = 0.25
        assert_eq!(pw.value(2), 1.0);
        assert_eq!(pw.value(3), 0.5);

        let bad = DeterministicKind::PiecewiseLinear {
            knots: vec![(0.0, 0.0), (2.0, 1.0)],
        };
        assert!(matches!(
            deterministic_path(&bad, grid),
            Err(PathError::InvalidKnots)
        ));
    }

    #[test]
    fn restriction_is_exact_node_sharing() {
        let grid = Grid::new(1.0, 64).unwrap();
        let w = sample_wiener(grid, Seed::new(3));
        let coarse = w.restrict(16).unwrap();
        for k in 0..=16 {
            assert_eq!(coarse.value(k), w.value(4 * k));
        }
        assert!(w.restrict(7).is_err());
    }

    proptest! {
        #[test]
        fn generators_are_pure_functions_of_seed(seed in any::<u64>(), stream in 0u64..1024) {
            let grid = Grid::new(1.0, 16).unwrap();
            let s = Seed { seed, stream };
            let first = sample_wiener(grid, s);
            let second = sample_wiener(grid, s);
            prop_assert_eq!(first.values(), second.values());
        }

        #[test]
        fn linear_driver_matches_closed_form(slope in -10.0f64..10.0) {
            let grid = Grid::new(2.0, 13).unwrap();
            let p = deterministic_path(&DeterministicKind::Linear { slope }, grid).unwrap();
            for k in 0..=13 {
                prop_assert_eq!(p.value(k), slope * grid.node(k));
            }
        }
    }
}
