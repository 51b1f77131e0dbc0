//! Pathwise construction of scalar Itô diffusions.
//!
//! The central object is a causal map that turns a driving path (Wiener,
//! fractional Brownian, or deterministic) into the solution path of an SDE
//! by solving a deterministic nonlinear Volterra equation
//!
//! ```text
//! x(t) = c( w(t) - ∫₀ᵗ κ(x(s)) ds )
//! ```
//!
//! with successive approximation — no stochastic integrals appear in the
//! construction. The transform `c` solves `c' = g(c)` and the kernel is
//! `κ = g'/2 - f/g`, so the fixed point coincides pathwise with the strong
//! solution of `dx = f(x) dt + g(x) dw`. The companion modules provide
//! reference SDE schemes, change-of-measure checks, distribution
//! comparisons, and driver recovery, all of which cross-validate the causal
//! construction numerically.

pub mod analysis;
pub mod csvio;
pub mod interp;
pub mod measure;
pub mod model;
pub mod paths;
pub mod report;
pub mod sde;
pub mod solver;
pub mod stats;

pub use model::{CatalogEntry, ModelSpec, Phi};
pub use paths::{Grid, Path, Seed};
pub use solver::{CausalSolution, Quadrature, SolveDiagnostics, SolverConfig};
