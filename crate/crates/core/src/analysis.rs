//! Driver recovery: invert the causal map to expose the latent driving path
//! from an observed state path, and align co-driven instrument pairs for
//! external system-identification tooling.

use crate::model::{ModelError, ModelSpec};
use crate::paths::Path;
use crate::solver::{running_integral, Quadrature};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("paths live on different grids")]
    GridMismatch,
    #[error("state value {value} at node {node} lies outside the range of the transform")]
    InverseDomain { node: usize, value: f64 },
}

/// Recover the driver from an observed state path:
/// `w(t_k) = c⁻¹(x(t_k)) + Q_k` with `Q` the running quadrature of `κ(x(·))`
/// under the same rule as the forward solver. The plus sign is the unique
/// inversion consistent with the fixed-point equation, and the round trip
/// through the solver is the check.
///
/// Node `k` of the output depends only on nodes `0..=k` of the input.
pub fn recover_driver(
    model: &ModelSpec,
    state: &Path,
    rule: Quadrature,
) -> Result<Path, AnalysisError> {
    let grid = state.grid();
    let kernel_values: Vec<f64> = state.values().iter().map(|&x| model.kernel(x)).collect();
    let q = running_integral(&kernel_values, grid.dt(), rule);
    let mut values = Vec::with_capacity(state.len());
    for (node, (&x, &qk)) in state.values().iter().zip(&q).enumerate() {
        let inv = model.inverse_transform(x).map_err(|e| match e {
            ModelError::InverseOutOfRange { value } => AnalysisError::InverseDomain { node, value },
            _ => AnalysisError::InverseDomain { node, value: x },
        })?;
        values.push(inv + qk);
    }
    Ok(Path::new(grid, values).expect("finite inversion"))
}

/// An observable input/output pair for a pair of instruments driven by the
/// same latent path: the driver recovered from the identified instrument,
/// aligned node-by-node with the other instrument's observations.
///
/// That both instruments share one driver is a caller-supplied assumption;
/// it cannot be verified from the data here.
#[derive(Debug, Clone)]
pub struct AlignedPair {
    pub driver: Path,
    pub output: Path,
}

pub fn co_driven_pairing(
    model_x: &ModelSpec,
    state: &Path,
    output: &Path,
    rule: Quadrature,
) -> Result<AlignedPair, AnalysisError> {
    if state.grid() != output.grid() {
        return Err(AnalysisError::GridMismatch);
    }
    let driver = recover_driver(model_x, state, rule)?;
    Ok(AlignedPair {
        driver,
        output: output.clone(),
    })
}
