//! Projected stochastic gradient method for the exponentiated objective.
//!
//! Starting from `theta = 0` (projected into the feasible set), each iteration
//! draws a perturbation, forms the unbiased gradient of `G` and takes a
//! projected step with `eta_i = (R(C) / zeta) sqrt(1 / (2 i))`. The uniform
//! average of the iterates then satisfies
//! `E[G(theta_hat)] - G* <= R(C) zeta sqrt(1 / (2T))` when the convexity
//! certificate holds and `zeta^2` bounds the gradient second moment.

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::objective::{check_convexity_certificate, mean_grad_estimate, Certificate, RiskModel, ScalarField};
use crate::sampler::GaussianSampler;
use crate::table::Table;

/// Pilot size used when `zeta` is estimated from gradient norms at the start.
pub const PILOT_SAMPLES: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleSet {
    Ball { center: Vector, radius: f64 },
    Box { lower: Vector, upper: Vector },
    All,
}

impl FeasibleSet {
    pub fn ball(center: Vector, radius: f64) -> Self {
        FeasibleSet::Ball { center, radius }
    }

    pub fn unit_ball(dim: usize) -> Self {
        FeasibleSet::Ball { center: Vector::zeros(dim), radius: 1.0 }
    }

    pub fn boxed(lower: Vector, upper: Vector) -> Self {
        FeasibleSet::Box { lower, upper }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            FeasibleSet::Ball { center, radius } => {
                if center.len() != dim {
                    return Err(Error::dims("ball center", dim, center.len()));
                }
                if !(*radius >= 0.0) {
                    return Err(Error::contract(format!("ball radius must be nonnegative, got {radius}")));
                }
            }
            FeasibleSet::Box { lower, upper } => {
                if lower.len() != dim || upper.len() != dim {
                    return Err(Error::dims("box bounds", dim, lower.len().min(upper.len())));
                }
                if let Some(i) = (0..dim).find(|&i| !(lower[i] <= upper[i])) {
                    return Err(Error::contract(format!(
                        "box lower bound exceeds upper bound in coordinate {i}: {} > {}",
                        lower[i], upper[i]
                    )));
                }
            }
            FeasibleSet::All => {}
        }
        Ok(())
    }

    /// Radius of a ball enclosing the set (`inf` for the whole space).
    pub fn radius_bound(&self) -> f64 {
        match self {
            FeasibleSet::Ball { radius, .. } => *radius,
            FeasibleSet::Box { lower, upper } => (upper - lower).norm() / 2.0,
            FeasibleSet::All => f64::INFINITY,
        }
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        match self {
            FeasibleSet::Ball { center, radius } => (x - center).norm() <= radius + tol,
            FeasibleSet::Box { lower, upper } => {
                x.iter().zip(lower.iter().zip(upper.iter())).all(|(v, (l, u))| *v >= l - tol && *v <= u + tol)
            }
            FeasibleSet::All => true,
        }
    }
}

/// Euclidean projection onto the set.
pub fn project(set: &FeasibleSet, x: &Vector) -> Result<Vector> {
    set.validate(x.len())?;
    Ok(match set {
        FeasibleSet::Ball { center, radius } => {
            let d = x - center;
            let norm = d.norm();
            if norm <= *radius {
                x.clone()
            } else {
                center + d * (*radius / norm)
            }
        }
        FeasibleSet::Box { lower, upper } => {
            Vector::from_iterator(x.len(), (0..x.len()).map(|i| x[i].clamp(lower[i], upper[i])))
        }
        FeasibleSet::All => x.clone(),
    })
}

/// Inputs to the closed-form second-moment bound for isotropic models
/// (`R = kappa I`, `Sigma = sigma^2 I`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceBoundInputs {
    pub alpha: f64,
    pub kappa: f64,
    pub sigma: f64,
    pub beta: f64,
    pub gamma_sq: f64,
    pub mbar: f64,
    pub radius: f64,
}

/// `zeta <= alpha^2 delta^2 exp(2 alpha (M + gamma^2) + alpha beta / (1 - alpha beta) - sigma^2 kappa)`
/// with `delta = sqrt(beta gamma^2 / (sigma^2 (1 - alpha beta))) + kappa R(C)`.
pub fn variance_bound(p: &VarianceBoundInputs) -> Result<f64> {
    let ab = p.alpha * p.beta;
    if ab >= 1.0 {
        return Err(Error::contract(format!("need alpha * beta < 1, got {ab}")));
    }
    if !(p.alpha > 0.0 && p.sigma > 0.0 && p.beta >= 0.0 && p.gamma_sq >= 0.0 && p.radius >= 0.0) {
        return Err(Error::contract("variance bound inputs out of range"));
    }
    let s2 = p.sigma * p.sigma;
    if p.alpha * p.kappa < 1.0 / s2 {
        return Err(Error::contract(format!(
            "certificate precondition alpha * kappa >= 1 / sigma^2 fails ({} < {})",
            p.alpha * p.kappa,
            1.0 / s2
        )));
    }
    let delta = (p.beta * p.gamma_sq / (s2 * (1.0 - ab))).sqrt() + p.kappa * p.radius;
    let exponent = 2.0 * p.alpha * (p.mbar + p.gamma_sq) + ab / (1.0 - ab) - s2 * p.kappa;
    Ok(p.alpha * p.alpha * delta * delta * exponent.exp())
}

/// `log(1 + exp_gap / g_star)`: converts a gap on `G` into a gap on `log G`.
///
/// Panics if `g_star <= 0` or `exp_gap < 0`.
pub fn log_gap_from_exp_gap(exp_gap: f64, g_star: f64) -> f64 {
    assert!(g_star > 0.0, "G* must be positive");
    assert!(exp_gap >= 0.0, "gap must be nonnegative");
    (exp_gap / g_star).ln_1p()
}

/// Convergence certificate `R(C) zeta sqrt(1 / (2T))`.
pub fn convergence_certificate(radius: f64, zeta: f64, iterations: usize) -> f64 {
    radius * zeta * (1.0 / (2.0 * iterations as f64)).sqrt()
}

/// Step size `eta_i = (R / zeta) sqrt(1 / (2 i))`, `i >= 1`.
pub fn step_size(radius: f64, zeta: f64, i: usize) -> f64 {
    radius / zeta * (1.0 / (2.0 * i as f64)).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Zeta {
    Fixed(f64),
    /// Root mean squared gradient norm over a pilot at the starting point.
    Pilot,
    FromBound(VarianceBoundInputs),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub iterations: usize,
    pub zeta: Zeta,
    /// Gradient samples averaged per iteration.
    pub batch: usize,
    pub averaging: bool,
    /// Replaces `R(C)` in the schedule; required for unbounded sets.
    pub radius: Option<f64>,
}

impl SolverConfig {
    pub fn new(iterations: usize, zeta: Zeta) -> Self {
        Self { iterations, zeta, batch: 1, averaging: true, radius: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub theta: Vector,
    pub grad_norm: f64,
    pub eta: f64,
}

#[derive(Debug, Clone)]
pub struct SolverReport {
    pub theta_hat: Vector,
    pub final_theta: Vector,
    pub certificate: f64,
    pub zeta: f64,
    pub radius: f64,
    pub trace: Vec<TraceRow>,
    pub convexity: Certificate,
    pub objective_log_gap: Option<f64>,
}

impl SolverReport {
    /// False when the convexity certificate failed and the optimality bound is void.
    pub fn certificate_valid(&self) -> bool {
        self.convexity.holds
    }

    /// Fills `objective_log_gap` from a known optimal value `G*`.
    pub fn with_reference(mut self, g_star: f64) -> Self {
        self.objective_log_gap = Some(log_gap_from_exp_gap(self.certificate, g_star));
        self
    }

    /// Root mean squared sampled gradient norm along the trace.
    pub fn empirical_zeta(&self) -> f64 {
        if self.trace.is_empty() {
            return 0.0;
        }
        (self.trace.iter().map(|r| r.grad_norm * r.grad_norm).sum::<f64>() / self.trace.len() as f64).sqrt()
    }

    pub fn trace_table(&self) -> Table {
        trace_table(&self.trace)
    }
}

pub fn trace_table(trace: &[TraceRow]) -> Table {
    let k = trace.first().map_or(0, |r| r.theta.len());
    let mut header = vec!["iter".to_string()];
    header.extend((0..k).map(|j| format!("theta_{j}")));
    header.push("grad_norm".into());
    header.push("eta".into());
    let mut t = Table { header, rows: Vec::with_capacity(trace.len()) };
    for r in trace {
        let mut row = Vec::with_capacity(k + 3);
        row.push(r.iter as f64);
        row.extend(r.theta.iter().copied());
        row.push(r.grad_norm);
        row.push(r.eta);
        t.push(row);
    }
    t
}

/// Shared projected-SGD driver. `grad(i, theta)` returns the averaged
/// gradient estimate for iteration `i` (1-based).
pub(crate) fn projected_sgd<G>(
    start: Vector,
    set: &FeasibleSet,
    radius: f64,
    zeta: f64,
    iterations: usize,
    averaging: bool,
    mut grad: G,
) -> Result<(Vector, Vector, Vec<TraceRow>)>
where
    G: FnMut(usize, &Vector) -> Result<Vector>,
{
    let mut theta = project(set, &start)?;
    let mut sum = Vector::zeros(theta.len());
    let mut trace = Vec::with_capacity(iterations);
    for i in 1..=iterations {
        let g = grad(i, &theta)?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { iter: i });
        }
        let eta = step_size(radius, zeta, i);
        theta = project(set, &(&theta - &g * eta))?;
        sum += &theta;
        trace.push(TraceRow { iter: i, theta: theta.clone(), grad_norm: g.norm(), eta });
    }
    let theta_hat = if averaging && iterations > 0 { sum / iterations as f64 } else { theta.clone() };
    Ok((theta_hat, theta, trace))
}

pub(crate) fn resolve_radius(set: &FeasibleSet, config: &SolverConfig) -> Result<f64> {
    let r = config.radius.unwrap_or_else(|| set.radius_bound());
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::contract(format!(
            "schedule needs a finite positive radius R(C), got {r}; set SolverConfig::radius"
        )));
    }
    Ok(r)
}

/// Runs the stochastic gradient method on `G`. A failed convexity certificate
/// does not stop the run; it is recorded in the report.
pub fn solve(
    f: &ScalarField,
    model: &RiskModel,
    set: &FeasibleSet,
    config: &SolverConfig,
    sampler: &mut GaussianSampler,
) -> Result<SolverReport> {
    if !f.has_gradient() {
        return Err(Error::MissingGradient);
    }
    if config.iterations == 0 || config.batch == 0 {
        return Err(Error::contract("iterations and batch must be positive"));
    }
    let k = model.dim();
    if f.dim() != k {
        return Err(Error::dims("field vs model", k, f.dim()));
    }
    set.validate(k)?;
    let convexity = check_convexity_certificate(model);
    let radius = resolve_radius(set, config)?;
    let start = project(set, &Vector::zeros(k))?;
    let zeta = match &config.zeta {
        Zeta::Fixed(z) => *z,
        Zeta::FromBound(inputs) => variance_bound(inputs)?,
        Zeta::Pilot => {
            let pilot = mean_grad_estimate(f, model, &start, PILOT_SAMPLES, sampler)?;
            let z = pilot.mean_sq_norm.sqrt();
            // a vanishing pilot means the start is stationary for every draw
            if z > 0.0 && z.is_finite() {
                z
            } else {
                1.0
            }
        }
    };
    if !(zeta > 0.0 && zeta.is_finite()) {
        return Err(Error::contract(format!("zeta must be positive and finite, got {zeta}")));
    }
    let (theta_hat, final_theta, trace) =
        projected_sgd(start, set, radius, zeta, config.iterations, config.averaging, |i, theta| {
            mean_grad_estimate(f, model, theta, config.batch, sampler)
                .map(|b| b.mean)
                .map_err(|e| match e {
                    Error::Overflow { .. } | Error::Evaluation { .. } => Error::NonFiniteGradient { iter: i },
                    e => e,
                })
        })?;
    Ok(SolverReport {
        theta_hat,
        final_theta,
        certificate: convergence_certificate(radius, zeta, config.iterations),
        zeta,
        radius,
        trace,
        convexity,
        objective_log_gap: None,
    })
}
