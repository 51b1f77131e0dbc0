//! Diffusion models and the transform pair behind the causal construction.
//!
//! A model couples the SDE coefficients `(f, g)` with the transform `c`
//! solving `c'(x) = g(c(x))` and the kernel `κ(x) = g'(x)/2 - f(x)/g(x)`.
//! `c` is either closed form (catalog entries) or tabulated by integrating
//! the defining ODE; `κ` is stored as a first-class function so models whose
//! diffusion vanishes somewhere stay usable.

use crate::interp::MonotoneTable;
use crate::report::RunReport;
use std::sync::Arc;
use thiserror::Error;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Step size and half-width for tabulating `c' = g(c)`.
#[derive(Debug, Clone, Copy)]
pub struct OdeTabulation {
    pub step: f64,
    pub half_width: f64,
}

impl Default for OdeTabulation {
    fn default() -> Self {
        OdeTabulation {
            step: 1e-3,
            half_width: 10.0,
        }
    }
}

/// Hard cap on |c| during tabulation; beyond this the ODE has effectively
/// blown up regardless of the declared domain.
const TABULATION_GUARD: f64 = 1e12;

/// Finite-difference step used by [`verify_model`].
pub const DEFAULT_FD_STEP: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("diffusion coefficient vanishes at x = {x}; kernel must be supplied directly")]
    DivisionByZeroDiffusion { x: f64 },
    #[error("transform tabulation escaped the model domain; reached arguments [{reached_lo}, {reached_hi}]")]
    OdeBlowup { reached_lo: f64, reached_hi: f64 },
    #[error("diffusion is not positive on the traversed range: g = {g_value} at state {at_state}")]
    NonmonotoneC { at_state: f64, g_value: f64 },
    #[error("power-law exponent must satisfy |alpha| < 1, got {0}")]
    InvalidAlpha(f64),
    #[error("kernel exceeds its declared bound {bound} at x = {at_x}: |kernel| = {value}")]
    KernelBoundExceeded { at_x: f64, value: f64, bound: f64 },
    #[error("transform argument {argument} outside tabulated interval [{lo}, {hi}]")]
    TransformOutOfRange { argument: f64, lo: f64, hi: f64 },
    #[error("value {value} outside the range of the transform")]
    InverseOutOfRange { value: f64 },
    #[error("transform tabulation degenerated: {0}")]
    DegenerateTabulation(String),
}

enum Transform {
    Closed { forward: ScalarFn, inverse: ScalarFn },
    Tabulated(MonotoneTable),
}

/// Immutable model specification, safely shareable across concurrent solves.
pub struct ModelSpec {
    name: String,
    drift: ScalarFn,
    diffusion: ScalarFn,
    diffusion_prime: ScalarFn,
    transform: Transform,
    kernel: ScalarFn,
    kernel_bound: f64,
    x0: f64,
    shift: f64,
    domain: (f64, f64),
}

impl std::fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("x0", &self.x0)
            .field("shift", &self.shift)
            .field("kernel_bound", &self.kernel_bound)
            .finish()
    }
}

impl ModelSpec {
    /// Assemble a model from explicit parts. The caller vouches for the
    /// transform/kernel consistency; [`verify_model`] checks it numerically.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        name: impl Into<String>,
        drift: ScalarFn,
        diffusion: ScalarFn,
        diffusion_prime: ScalarFn,
        forward: ScalarFn,
        inverse: ScalarFn,
        kernel: ScalarFn,
        kernel_bound: f64,
        shift: f64,
        domain: (f64, f64),
    ) -> Self {
        let x0 = forward(0.0);
        ModelSpec {
            name: name.into(),
            drift,
            diffusion,
            diffusion_prime,
            transform: Transform::Closed { forward, inverse },
            kernel,
            kernel_bound,
            x0,
            shift,
            domain,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Initial value `x(0) = c(0)`.
    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn kernel_bound(&self) -> f64 {
        self.kernel_bound
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn drift(&self, x: f64) -> f64 {
        (self.drift)(x)
    }

    pub fn diffusion(&self, x: f64) -> f64 {
        (self.diffusion)(x)
    }

    pub fn diffusion_prime(&self, x: f64) -> f64 {
        (self.diffusion_prime)(x)
    }

    pub fn kernel(&self, x: f64) -> f64 {
        (self.kernel)(x)
    }

    pub fn transform(&self, x: f64) -> Result<f64, ModelError> {
        match &self.transform {
            Transform::Closed { forward, .. } => Ok(forward(x)),
            Transform::Tabulated(table) => table.eval(x).ok_or_else(|| {
                let (lo, hi) = table.x_range();
                ModelError::TransformOutOfRange {
                    argument: x,
                    lo,
                    hi,
                }
            }),
        }
    }

    pub fn inverse_transform(&self, y: f64) -> Result<f64, ModelError> {
        match &self.transform {
            Transform::Closed { inverse, .. } => Ok(inverse(y)),
            Transform::Tabulated(table) => table
                .invert(y)
                .ok_or(ModelError::InverseOutOfRange { value: y }),
        }
    }

    /// The tabulation backing a numerically-built transform, if any.
    pub fn transform_table(&self) -> Option<&MonotoneTable> {
        match &self.transform {
            Transform::Tabulated(table) => Some(table),
            Transform::Closed { .. } => None,
        }
    }
}

/// Kernel value `g'(x)/2 - f(x)/g(x)` from the SDE coefficients.
pub fn kernel_from_coefficients(
    drift: impl Fn(f64) -> f64,
    diffusion: impl Fn(f64) -> f64,
    diffusion_prime: impl Fn(f64) -> f64,
    x: f64,
) -> Result<f64, ModelError> {
    let g = diffusion(x);
    if g == 0.0 {
        return Err(ModelError::DivisionByZeroDiffusion { x });
    }
    Ok(diffusion_prime(x) / 2.0 - drift(x) / g)
}

/// Bounded kernel shapes selectable by name; the catalog entries leave this
/// function free, so tests and the CLI pick from a small builtin set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Phi {
    Atan,
    Sin,
    Zero,
    Const(f64),
}

impl Phi {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Phi::Atan => x.atan(),
            Phi::Sin => x.sin(),
            Phi::Zero => 0.0,
            Phi::Const(k) => *k,
        }
    }

    pub fn bound(&self) -> f64 {
        match self {
            Phi::Atan => std::f64::consts::FRAC_PI_2,
            Phi::Sin => 1.0,
            Phi::Zero => 0.0,
            Phi::Const(k) => k.abs(),
        }
    }
}

/// Closed-form model catalog.
#[derive(Debug, Clone, PartialEq)]
pub enum CatalogEntry {
    /// `f = 0`, `g = 1`, `c = id`, kernel 0. The causal map is then the
    /// identity on drivers.
    Identity,
    /// `f = -kappa0`, `g = 1`, `c = id`: pure constant kernel.
    ConstantKernel { kappa0: f64 },
    /// `g(x) = sqrt(1 + x²)`, `c(x) = sinh(a + x)`,
    /// `f(x) = x/2 - phi(x)·sqrt(1 + x²)`, kernel `phi`.
    Hyperbolic { a: f64, phi: Phi },
    /// `g(x) = |x|^alpha` with `|alpha| < 1`,
    /// `c(x) = sign(a+x)·[(1-alpha)|a+x|]^{1/(1-alpha)}`,
    /// `f(x) = (alpha/2)·sign(x)·|x|^{2alpha-1} - |x|^alpha·phi(x)`.
    /// `g` is not C¹ at 0 and `c` has a non-Lipschitz inverse at 0; keep
    /// finite differences away from `x = -a`.
    PowerLaw { a: f64, alpha: f64, phi: Phi },
}

pub fn catalog_model(entry: &CatalogEntry) -> Result<ModelSpec, ModelError> {
    let unbounded = (f64::NEG_INFINITY, f64::INFINITY);
    match *entry {
        CatalogEntry::Identity => Ok(ModelSpec::from_parts(
            "identity",
            Arc::new(|_| 0.0),
            Arc::new(|_| 1.0),
            Arc::new(|_| 0.0),
            Arc::new(|x| x),
            Arc::new(|y| y),
            Arc::new(|_| 0.0),
            0.0,
            0.0,
            unbounded,
        )),
        CatalogEntry::ConstantKernel { kappa0 } => Ok(ModelSpec::from_parts(
            format!("constant-kernel({kappa0})"),
            Arc::new(move |_| -kappa0),
            Arc::new(|_| 1.0),
            Arc::new(|_| 0.0),
            Arc::new(|x| x),
            Arc::new(|y| y),
            Arc::new(move |_| kappa0),
            kappa0.abs(),
            0.0,
            unbounded,
        )),
        CatalogEntry::Hyperbolic { a, phi } => Ok(ModelSpec::from_parts(
            format!("hyperbolic(a={a})"),
            Arc::new(move |x| x / 2.0 - phi.eval(x) * (1.0 + x * x).sqrt()),
            Arc::new(|x| (1.0 + x * x).sqrt()),
            Arc::new(|x| x / (1.0 + x * x).sqrt()),
            Arc::new(move |x| (a + x).sinh()),
            Arc::new(move |y| y.asinh() - a),
            Arc::new(move |x| phi.eval(x)),
            phi.bound(),
            a,
            unbounded,
        )),
        CatalogEntry::PowerLaw { a, alpha, phi } => {
            if alpha.abs() >= 1.0 {
                return Err(ModelError::InvalidAlpha(alpha));
            }
            let drift = move |x: f64| {
                let power = if x == 0.0 {
                    // sign(0)·|0|^{2a-1}: zero when the exponent term drops
                    // out (alpha = 0), undefined otherwise.
                    if alpha == 0.0 {
                        0.0
                    } else {
                        f64::NAN
                    }
                } else {
                    0.5 * alpha * x.signum() * x.abs().powf(2.0 * alpha - 1.0)
                };
                power - x.abs().powf(alpha) * phi.eval(x)
            };
            let diffusion = move |x: f64| x.abs().powf(alpha);
            let diffusion_prime = move |x: f64| {
                if x == 0.0 {
                    if alpha == 0.0 {
                        0.0
                    } else {
                        f64::NAN
                    }
                } else {
                    alpha * x.signum() * x.abs().powf(alpha - 1.0)
                }
            };
            let forward = move |x: f64| {
                let u = a + x;
                let mag = ((1.0 - alpha) * u.abs()).powf(1.0 / (1.0 - alpha));
                if u < 0.0 {
                    -mag
                } else {
                    mag
                }
            };
            let inverse = move |y: f64| {
                let mag = y.abs().powf(1.0 - alpha) / (1.0 - alpha);
                let u = if y < 0.0 { -mag } else { mag };
                u - a
            };
            Ok(ModelSpec::from_parts(
                format!("power-law(a={a}, alpha={alpha})"),
                Arc::new(drift),
                Arc::new(diffusion),
                Arc::new(diffusion_prime),
                Arc::new(forward),
                Arc::new(inverse),
                Arc::new(move |x| phi.eval(x)),
                phi.bound(),
                a,
                unbounded,
            ))
        }
    }
}

/// Build a model from coefficients alone, tabulating `c' = g(c)`, `c(0) = x0`
/// on `[-half_width, half_width]` with classical fourth-order fixed steps and
/// monotone cubic interpolation between nodes. The inverse comes from
/// inverting the monotone table; the kernel from [`kernel_from_coefficients`].
///
/// Requires `g > 0` on the traversed range and the kernel to stay within the
/// declared `kernel_bound` (sampled over the tabulated state range).
#[allow(clippy::too_many_arguments)]
pub fn build_model_from_coefficients(
    name: impl Into<String>,
    drift: ScalarFn,
    diffusion: ScalarFn,
    diffusion_prime: ScalarFn,
    x0: f64,
    domain: (f64, f64),
    kernel_bound: f64,
    ode: &OdeTabulation,
) -> Result<ModelSpec, ModelError> {
    let table = tabulate_transform(&diffusion, x0, domain, ode)?;

    let kernel: ScalarFn = {
        let d = drift.clone();
        let g = diffusion.clone();
        let gp = diffusion_prime.clone();
        Arc::new(move |x| gp(x) / 2.0 - d(x) / g(x))
    };

    // Reject kernels that escape the declared bound anywhere on the state
    // range the transform can reach. NaN counts as an escape.
    let (y_lo, y_hi) = table.y_range();
    let limit = kernel_bound * (1.0 + 1e-12);
    let samples = 4001;
    for i in 0..samples {
        let x = y_lo + (y_hi - y_lo) * i as f64 / (samples - 1) as f64;
        let v = kernel(x);
        if v.is_nan() || v.abs() > limit {
            return Err(ModelError::KernelBoundExceeded {
                at_x: x,
                value: v,
                bound: kernel_bound,
            });
        }
    }

    Ok(ModelSpec {
        name: name.into(),
        drift,
        diffusion,
        diffusion_prime,
        transform: Transform::Tabulated(table),
        kernel,
        kernel_bound,
        x0,
        shift: 0.0,
        domain,
    })
}

/// Coefficients of the hyperbolic catalog entry, built numerically instead of
/// with the closed forms. Useful for cross-checking the tabulation and for
/// kernels that must be derived from `(f, g)`.
pub fn build_hyperbolic_from_coefficients(
    a: f64,
    phi: Phi,
    ode: &OdeTabulation,
) -> Result<ModelSpec, ModelError> {
    build_model_from_coefficients(
        format!("hyperbolic-fg(a={a})"),
        Arc::new(move |x| x / 2.0 - phi.eval(x) * (1.0 + x * x).sqrt()),
        Arc::new(|x: f64| (1.0 + x * x).sqrt()),
        Arc::new(|x: f64| x / (1.0 + x * x).sqrt()),
        a.sinh(),
        (f64::NEG_INFINITY, f64::INFINITY),
        phi.bound() + 1e-9,
        ode,
    )
}

fn tabulate_transform(
    g: &ScalarFn,
    x0: f64,
    domain: (f64, f64),
    ode: &OdeTabulation,
) -> Result<MonotoneTable, ModelError> {
    let steps = (ode.half_width / ode.step).round() as usize;
    let forward = integrate_direction(g, x0, ode.step, steps, domain);
    let backward = integrate_direction(g, x0, -ode.step, steps, domain);
    match (&forward, &backward) {
        (Err(DirectionError::NonPositive { at_state, g_value }), _)
        | (_, Err(DirectionError::NonPositive { at_state, g_value })) => {
            return Err(ModelError::NonmonotoneC {
                at_state: *at_state,
                g_value: *g_value,
            });
        }
        _ => {}
    }
    let (fwd, bwd) = match (forward, backward) {
        (Ok(f), Ok(b)) => (f, b),
        (f, b) => {
            let hi = match &f {
                Ok(nodes) => nodes.last().map(|n| n.0).unwrap_or(0.0),
                Err(DirectionError::Escaped { reached }) => *reached,
                Err(_) => 0.0,
            };
            let lo = match &b {
                Ok(nodes) => nodes.last().map(|n| n.0).unwrap_or(0.0),
                Err(DirectionError::Escaped { reached }) => *reached,
                Err(_) => 0.0,
            };
            return Err(ModelError::OdeBlowup {
                reached_lo: lo,
                reached_hi: hi,
            });
        }
    };

    let mut xs = Vec::with_capacity(2 * steps + 1);
    let mut ys = Vec::with_capacity(2 * steps + 1);
    for &(x, y) in bwd.iter().rev() {
        xs.push(x);
        ys.push(y);
    }
    xs.push(0.0);
    ys.push(x0);
    for &(x, y) in &fwd {
        xs.push(x);
        ys.push(y);
    }
    MonotoneTable::new(xs, ys).map_err(|e| ModelError::DegenerateTabulation(e.to_string()))
}

enum DirectionError {
    NonPositive { at_state: f64, g_value: f64 },
    Escaped { reached: f64 },
}

fn integrate_direction(
    g: &ScalarFn,
    x0: f64,
    h: f64,
    steps: usize,
    domain: (f64, f64),
) -> Result<Vec<(f64, f64)>, DirectionError> {
    let mut nodes = Vec::with_capacity(steps);
    let mut x = 0.0;
    let mut y = x0;
    let eval = |state: f64| -> Result<f64, DirectionError> {
        let v = g(state);
        if !v.is_finite() || v <= 0.0 {
            return Err(DirectionError::NonPositive {
                at_state: state,
                g_value: v,
            });
        }
        Ok(v)
    };
    for _ in 0..steps {
        let k1 = eval(y)?;
        let k2 = eval(y + 0.5 * h * k1)?;
        let k3 = eval(y + 0.5 * h * k2)?;
        let k4 = eval(y + h * k3)?;
        y += h * ((k1 + 2.0 * (k2 + k3) + k4) / 6.0);
        x += h;
        if !y.is_finite() || y.abs() > TABULATION_GUARD || y < domain.0 || y > domain.1 {
            return Err(DirectionError::Escaped { reached: x });
        }
        nodes.push((x, y));
    }
    Ok(nodes)
}

/// Finite-difference audit of the model's defining identities on a grid of
/// state-space arguments: `c' = g(c)`, kernel vs. `g'/2 - f/g`, the inverse
/// round trip, and the declared kernel bound. Points where a quantity is
/// undefined (vanishing diffusion, arguments off the tabulated interval)
/// are skipped, not failed.
pub fn verify_model(model: &ModelSpec, xs: &[f64], tol: f64) -> RunReport {
    let mut report = RunReport::new(format!("verify:{}", model.name()));
    let h = DEFAULT_FD_STEP;

    let mut dev_transform: f64 = 0.0;
    let mut dev_inverse: f64 = 0.0;
    let mut dev_kernel: f64 = 0.0;
    let mut sup_kernel: f64 = 0.0;
    for &x in xs {
        let (above, below) = (x + h, x - h);
        if let (Ok(cp), Ok(cm), Ok(c0)) = (
            model.transform(above),
            model.transform(below),
            model.transform(x),
        ) {
            // Divide by the realized abscissa spacing so the quotient is
            // exact for affine transforms.
            let fd = (cp - cm) / (above - below);
            let rhs = model.diffusion(c0);
            if fd.is_finite() && rhs.is_finite() {
                dev_transform = dev_transform.max((fd - rhs).abs());
            }
            if let Ok(back) = model.inverse_transform(c0) {
                dev_inverse = dev_inverse.max((back - x).abs());
            }
        }

        let k = model.kernel(x);
        if k.is_finite() {
            sup_kernel = sup_kernel.max(k.abs());
        }
        let g = model.diffusion(x);
        if g != 0.0 {
            let expected = model.diffusion_prime(x) / 2.0 - model.drift(x) / g;
            if expected.is_finite() && k.is_finite() {
                dev_kernel = dev_kernel.max((k - expected).abs());
            }
        }
    }

    report.push_check("transform_ode", dev_transform, tol);
    report.push_check("kernel_identity", dev_kernel, tol);
    report.push_check("inverse_round_trip", dev_inverse, tol);
    report.push_check(
        "kernel_bound",
        (sup_kernel - model.kernel_bound()).max(0.0),
        tol,
    );
    report.set_metric("points", xs.len() as f64);
    report.set_metric("sup_kernel", sup_kernel);
    report
}

/// Equispaced audit grid on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2);
    (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect()
}
