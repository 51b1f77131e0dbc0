//! Run configuration: a flat TOML file with sections for the model, the
//! grid, the solver, and experiment-specific knobs. Every field not present
//! is defaulted here and the fully resolved configuration is written next to
//! the outputs, so a run is reproducible from its own artifacts.

use causal_sde::model::{
    build_hyperbolic_from_coefficients, catalog_model, CatalogEntry, ModelSpec, OdeTabulation, Phi,
};
use causal_sde::paths::Grid;
use causal_sde::solver::{InitialGuess, Quadrature, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<String>,
    pub model: ModelSection,
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// identity | constant-kernel | hyperbolic | power-law | hyperbolic-fg
    pub kind: String,
    pub a: Option<f64>,
    pub alpha: Option<f64>,
    pub kappa0: Option<f64>,
    /// atan | sin | zero | const
    pub phi: Option<String>,
    pub phi_value: Option<f64>,
    pub ode_step: Option<f64>,
    pub ode_half_width: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub lambda: Option<f64>,
    pub quadrature: Option<Quadrature>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub n_paths: Option<usize>,
    pub n_samples: Option<usize>,
    pub hurst: Option<f64>,
    pub t_observed: Option<f64>,
    pub n_list: Option<Vec<usize>>,
    pub mc_paths: Option<usize>,
    pub input_csv: Option<String>,
    pub dump_samples: Option<bool>,
}

/// Configuration with every default materialized; this is what gets written
/// back as `resolved_config.toml`.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub seed: u64,
    pub out_dir: String,
    pub model: ModelSection,
    pub grid: GridSection,
    pub solver: ResolvedSolver,
    pub experiment: ResolvedExperiment,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResolvedSolver {
    pub tol: f64,
    pub max_iter: usize,
    pub lambda: f64,
    pub quadrature: Quadrature,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedExperiment {
    pub n_paths: usize,
    pub n_samples: usize,
    pub hurst: f64,
    pub t_observed: f64,
    pub n_list: Vec<usize>,
    pub mc_paths: usize,
    pub input_csv: Option<String>,
    pub dump_samples: bool,
}

pub fn parse(text: &str) -> Result<RawConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

pub fn resolve(
    raw: RawConfig,
    seed_override: Option<u64>,
    out_override: Option<String>,
) -> ResolvedConfig {
    let defaults = SolverConfig::default();
    ResolvedConfig {
        seed: seed_override.or(raw.seed).unwrap_or(0),
        out_dir: out_override
            .or(raw.out_dir)
            .unwrap_or_else(|| "runs".to_string()),
        solver: ResolvedSolver {
            tol: raw.solver.tol.unwrap_or(defaults.tol),
            max_iter: raw.solver.max_iter.unwrap_or(defaults.max_iter),
            lambda: raw.solver.lambda.unwrap_or(defaults.lambda),
            quadrature: raw.solver.quadrature.unwrap_or(defaults.quadrature),
        },
        experiment: ResolvedExperiment {
            n_paths: raw.experiment.n_paths.unwrap_or(10),
            n_samples: raw.experiment.n_samples.unwrap_or(10_000),
            hurst: raw.experiment.hurst.unwrap_or(0.7),
            t_observed: raw.experiment.t_observed.unwrap_or(raw.grid.horizon),
            n_list: raw
                .experiment
                .n_list
                .unwrap_or_else(|| vec![64, 128, 256, 512, 1024]),
            mc_paths: raw.experiment.mc_paths.unwrap_or(200),
            input_csv: raw.experiment.input_csv,
            dump_samples: raw.experiment.dump_samples.unwrap_or(false),
        },
        model: raw.model,
        grid: raw.grid,
    }
}

impl ResolvedConfig {
    pub fn grid(&self) -> Result<Grid, CliError> {
        Ok(Grid::new(self.grid.horizon, self.grid.steps)?)
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            lambda: self.solver.lambda,
            quadrature: self.solver.quadrature,
            initial_guess: InitialGuess::Constant,
        }
    }

    pub fn build_model(&self) -> Result<ModelSpec, CliError> {
        let m = &self.model;
        let phi = parse_phi(m)?;
        let a = m.a.unwrap_or(0.0);
        let model = match m.kind.as_str() {
            "identity" => catalog_model(&CatalogEntry::Identity)?,
            "constant-kernel" => {
                let kappa0 = m.kappa0.ok_or_else(|| {
                    CliError::Config("model kind 'constant-kernel' requires 'kappa0'".into())
                })?;
                catalog_model(&CatalogEntry::ConstantKernel { kappa0 })?
            }
            "hyperbolic" => catalog_model(&CatalogEntry::Hyperbolic { a, phi })?,
            "power-law" => {
                let alpha = m.alpha.ok_or_else(|| {
                    CliError::Config("model kind 'power-law' requires 'alpha'".into())
                })?;
                catalog_model(&CatalogEntry::PowerLaw { a, alpha, phi })?
            }
            "hyperbolic-fg" => {
                let ode = OdeTabulation {
                    step: m.ode_step.unwrap_or(1e-3),
                    half_width: m.ode_half_width.unwrap_or(10.0),
                };
                build_hyperbolic_from_coefficients(a, phi, &ode)?
            }
            other => {
                return Err(CliError::Config(format!(
                    "unknown model kind '{other}' (expected identity, constant-kernel, \
                     hyperbolic, power-law, or hyperbolic-fg)"
                )))
            }
        };
        Ok(model)
    }
}

fn parse_phi(m: &ModelSection) -> Result<Phi, CliError> {
    match m.phi.as_deref().unwrap_or("atan") {
        "atan" => Ok(Phi::Atan),
        "sin" => Ok(Phi::Sin),
        "zero" => Ok(Phi::Zero),
        "const" => {
            let value = m
                .phi_value
                .ok_or_else(|| CliError::Config("phi 'const' requires 'phi_value'".into()))?;
            Ok(Phi::Const(value))
        }
        other => Err(CliError::Config(format!(
            "unknown phi '{other}' (expected atan, sin, zero, or const)"
        ))),
    }
}
