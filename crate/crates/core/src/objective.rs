//! Objectives, the risk model and the risk-averse (log-exp) transform.
//!
//! For a field `f` bounded above, noise `omega ~ N(0, Sigma)`, risk factor
//! `alpha` and quadratic weight `R`, the convexified objective is
//!
//! ```text
//! (1/alpha) log E[exp(alpha f(theta + omega))] + 1/2 theta' R theta
//! ```
//!
//! which is convex whenever `alpha R - Sigma^{-1}` is positive semidefinite,
//! whatever `f` looks like. Its exponentiated form
//! `G(theta) = E[exp(alpha f(theta + omega) + alpha/2 theta' R theta)]`
//! admits single-sample unbiased gradients.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::parallel;
use crate::sampler::GaussianSampler;
use crate::stats::{Estimate, LogExpAcc, MeanAcc};

/// Samples per Monte-Carlo block. Fixed so that results do not depend on the
/// number of worker threads.
pub const MC_BLOCK: usize = 4096;

/// Largest exponent whose `exp` is still finite.
pub const MAX_EXPONENT: f64 = 709.782712893384;

type ValueFn = dyn Fn(&Vector) -> f64 + Send + Sync;
type GradFn = dyn Fn(&Vector) -> Vector + Send + Sync;

/// A scalar objective `f: R^k -> R` with an upper bound and optional gradient.
#[derive(Clone)]
pub struct ScalarField {
    dim: usize,
    upper_bound: f64,
    lipschitz: Option<f64>,
    value: Arc<ValueFn>,
    gradient: Option<Arc<GradFn>>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("dim", &self.dim)
            .field("upper_bound", &self.upper_bound)
            .field("lipschitz", &self.lipschitz)
            .field("has_gradient", &self.gradient.is_some())
            .finish()
    }
}

impl ScalarField {
    /// `upper_bound` is checked on every evaluation. Passing `f64::INFINITY`
    /// disables the check (analytic test fields such as linear functions).
    pub fn new<F>(dim: usize, upper_bound: f64, value: F) -> Self
    where
        F: Fn(&Vector) -> f64 + Send + Sync + 'static,
    {
        assert!(dim > 0, "field dimension must be positive");
        assert!(!upper_bound.is_nan(), "upper bound must not be NaN");
        Self { dim, upper_bound, lipschitz: None, value: Arc::new(value), gradient: None }
    }

    pub fn with_gradient<G>(mut self, gradient: G) -> Self
    where
        G: Fn(&Vector) -> Vector + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        assert!(l >= 0.0 && l.is_finite(), "Lipschitz constant must be finite and nonnegative");
        self.lipschitz = Some(l);
        self
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::new(dim, c, move |_| c)
            .with_gradient(move |_| Vector::zeros(dim))
            .with_lipschitz(0.0)
    }

    /// `f(theta) = a' theta`; unbounded, so only for analytic checks.
    pub fn linear(a: Vector) -> Self {
        let dim = a.len();
        let l = a.norm();
        let g = a.clone();
        Self::new(dim, f64::INFINITY, move |x| a.dot(x))
            .with_gradient(move |_| g.clone())
            .with_lipschitz(l)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn upper_bound(&self) -> f64 {
        self.upper_bound
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    /// Evaluates `f`. `-inf` is a legal value (the field is bounded above);
    /// NaN, `+inf` and values above the declared bound are errors.
    pub fn value(&self, theta: &Vector) -> Result<f64> {
        let v = (self.value)(theta);
        if v.is_nan() || v == f64::INFINITY {
            return Err(Error::Evaluation { theta: theta.as_slice().to_vec(), value: v });
        }
        if v > self.upper_bound {
            return Err(Error::BoundViolated {
                theta: theta.as_slice().to_vec(),
                value: v,
                bound: self.upper_bound,
            });
        }
        Ok(v)
    }

    pub fn gradient(&self, theta: &Vector) -> Result<Vector> {
        let g = self.gradient.as_ref().ok_or(Error::MissingGradient)?;
        Ok(g(theta))
    }
}

/// Soft clamp `mbar * tanh(raw / mbar)`, which keeps differentiability and
/// bounds the field by `mbar`.
pub fn clamp_bounded(raw: ScalarField, mbar: f64) -> Result<ScalarField> {
    if !(mbar > 0.0 && mbar.is_finite()) {
        return Err(Error::contract(format!("clamp bound must be positive and finite, got {mbar}")));
    }
    let inner = raw.clone();
    let mut out = ScalarField::new(raw.dim, mbar, move |x| {
        let r = (inner.value)(x);
        if r.is_finite() {
            mbar * (r / mbar).tanh()
        } else {
            f64::NAN
        }
    });
    if let Some(g) = raw.gradient.clone() {
        let inner = raw.value.clone();
        // sech^2 underflows to zero at saturation
        out = out.with_gradient(move |x| {
            let t = (inner(x) / mbar).tanh();
            g(x) * (1.0 - t * t)
        });
    }
    if let Some(l) = raw.lipschitz {
        out = out.with_lipschitz(l);
    }
    Ok(out)
}

/// `(alpha, Sigma, R)`: risk factor, perturbation covariance, quadratic weight.
#[derive(Debug, Clone)]
pub struct RiskModel {
    alpha: f64,
    sigma: Matrix,
    reg: Matrix,
    sigma_inv: Matrix,
}

impl RiskModel {
    pub fn new(alpha: f64, sigma: Matrix, reg: Matrix) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::contract(format!("risk factor must be positive, got {alpha}")));
        }
        let k = linalg::check_square(&sigma, "Sigma")?;
        if linalg::check_square(&reg, "R")? != k {
            return Err(Error::dims("R", k, reg.nrows()));
        }
        let sigma = linalg::symmetrize(&sigma);
        let reg = linalg::symmetrize(&reg);
        let sigma_inv = linalg::spd_inverse(&sigma)?;
        let r_min = linalg::min_eigenvalue(&reg);
        if r_min < -1e-12 * (1.0 + linalg::eigenvalues(&reg).amax()) {
            return Err(Error::NotDefinite { what: "positive semidefinite (R)", min_eig: r_min });
        }
        Ok(Self { alpha, sigma, reg, sigma_inv })
    }

    /// `Sigma = sigma^2 I`, `R = kappa I`.
    pub fn isotropic(alpha: f64, sigma: f64, kappa: f64, dim: usize) -> Result<Self> {
        Self::new(
            alpha,
            Matrix::identity(dim, dim) * (sigma * sigma),
            Matrix::identity(dim, dim) * kappa,
        )
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }

    pub fn reg(&self) -> &Matrix {
        &self.reg
    }

    pub fn sigma_inv(&self) -> &Matrix {
        &self.sigma_inv
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    /// `1/2 theta' R theta`
    pub fn quadratic(&self, theta: &Vector) -> f64 {
        0.5 * linalg::quad_form(&self.reg, theta)
    }

    pub fn sampler(&self, seed: u64) -> Result<GaussianSampler> {
        GaussianSampler::new(seed, &self.sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub holds: bool,
    /// Smallest eigenvalue of `alpha R - Sigma^{-1}`.
    pub margin: f64,
    pub tolerance: f64,
}

/// Scale-relative PSD tolerance `1e-10 (1 + lmax(alpha R) + lmax(Sigma^{-1}))`.
pub fn psd_tolerance(alpha_r: &Matrix, sigma_inv: &Matrix) -> f64 {
    1e-10 * (1.0 + linalg::max_eigenvalue(alpha_r).max(0.0) + linalg::max_eigenvalue(sigma_inv).max(0.0))
}

/// Certificate for `alpha R >= Sigma^{-1}` given explicit matrices.
pub fn certificate_for(alpha: f64, reg: &Matrix, sigma_inv: &Matrix) -> Certificate {
    let alpha_r = reg * alpha;
    let tolerance = psd_tolerance(&alpha_r, sigma_inv);
    let margin = linalg::min_eigenvalue(&(alpha_r - sigma_inv));
    Certificate { holds: margin >= -tolerance, margin, tolerance }
}

pub fn check_convexity_certificate(model: &RiskModel) -> Certificate {
    certificate_for(model.alpha, &model.reg, &model.sigma_inv)
}

fn check_inputs(f: &ScalarField, model: &RiskModel, theta: &Vector, n: usize) -> Result<()> {
    if f.dim() != model.dim() {
        return Err(Error::dims("field vs model", model.dim(), f.dim()));
    }
    if theta.len() != model.dim() {
        return Err(Error::dims("theta", model.dim(), theta.len()));
    }
    if n < 2 {
        return Err(Error::contract(format!("need at least 2 samples, got {n}")));
    }
    Ok(())
}

/// Runs `push(acc, sample_index, omega)` over `n` draws from a fresh stream of
/// `sampler`, one accumulator per fixed-size block, returned in block order.
/// Cloning the sampler beforehand replays the same draws.
pub fn fold_samples<A, F>(sampler: &mut GaussianSampler, n: usize, push: F) -> Result<Vec<A>>
where
    A: Default + Send,
    F: Fn(&mut A, u64, &Vector) -> Result<()> + Sync + Send,
{
    let key = sampler.next_key();
    let sampler = &*sampler;
    let blocks = parallel::chunks(n, MC_BLOCK);
    parallel::try_map_blocks(blocks.len(), |b| {
        let (start, len) = blocks[b];
        let mut rng = key.rng(b as u64);
        let mut acc = A::default();
        for i in 0..len {
            let omega = sampler.draw(&mut rng);
            push(&mut acc, (start + i) as u64, &omega)?;
        }
        Ok(acc)
    })
}

fn log_exp_acc(
    f: &ScalarField,
    model: &RiskModel,
    theta: &Vector,
    n: usize,
    sampler: &mut GaussianSampler,
) -> Result<LogExpAcc> {
    let alpha = model.alpha;
    let blocks = fold_samples(sampler, n, |acc: &mut LogExpAcc, i, omega| {
        acc.push(alpha * f.value(&(theta + omega))?, i);
        Ok(())
    })?;
    let mut acc = LogExpAcc::default();
    for b in &blocks {
        acc.merge(b);
    }
    if acc.is_degenerate() {
        return Err(Error::DegenerateEstimate);
    }
    Ok(acc)
}

/// Gaussian smoothing `E[f(theta + omega)]`.
pub fn smoothed_value(
    f: &ScalarField,
    model: &RiskModel,
    theta: &Vector,
    n: usize,
    sampler: &mut GaussianSampler,
) -> Result<Estimate> {
    check_inputs(f, model, theta, n)?;
    let blocks = fold_samples(sampler, n, |acc: &mut MeanAcc, _, omega| {
        acc.push(f.value(&(theta + omega))?);
        Ok(())
    })?;
    let mut acc = MeanAcc::default();
    for b in &blocks {
        acc.merge(b);
    }
    let est = acc.estimate();
    if !est.value.is_finite() {
        return Err(Error::DegenerateEstimate);
    }
    Ok(est)
}

/// The convexified objective `(1/alpha) log E[exp(alpha f(theta+omega))] + 1/2 theta' R theta`.
/// The standard error comes from the delta method on the sample mean.
pub fn log_exp_objective(
    f: &ScalarField,
    model: &RiskModel,
    theta: &Vector,
    n: usize,
    sampler: &mut GaussianSampler,
) -> Result<Estimate> {
    check_inputs(f, model, theta, n)?;
    let acc = log_exp_acc(f, model, theta, n, sampler)?;
    Ok(Estimate {
        value: acc.log_mean() / model.alpha + model.quadratic(theta),
        std_err: acc.relative_std_err() / model.alpha,
    })
}

/// `G(theta) = E[exp(alpha f(theta+omega) + alpha/2 theta' R theta)]`.
pub fn exp_objective(
    f: &ScalarField,
    model: &RiskModel,
    theta: &Vector,
    n: usize,
    sampler: &mut GaussianSampler,
) -> Result<Estimate> {
    check_inputs(f, model, theta, n)?;
    let acc = log_exp_acc(f, model, theta, n, sampler)?;
    let shift = model.alpha * model.quadratic(theta);
    let (max, argmax) = acc.max();
    if max + shift > MAX_EXPONENT {
        return Err(Error::Overflow { sample: argmax as usize, exponent: max + shift });
    }
    let log_g = acc.log_mean() + shift;
    if log_g > MAX_EXPONENT {
        return Err(Error::Overflow { sample: argmax as usize, exponent: log_g });
    }
    let value = log_g.exp();
    Ok(Estimate { value, std_err: value * acc.relative_std_err() })
}

/// Single-sample gradient of `G` at a given perturbation `omega`:
/// `alpha exp(alpha f(theta+omega) + alpha/2 theta'R theta) (grad f(theta+omega) + R theta)`.
pub fn grad_sample_at(f: &ScalarField, model: &RiskModel, theta: &Vector, omega: &Vector) -> Result<Vector> {
    if !f.has_gradient() {
        return Err(Error::MissingGradient);
    }
    let x = theta + omega;
    let exponent = model.alpha * (f.value(&x)? + model.quadratic(theta));
    if exponent > MAX_EXPONENT {
        return Err(Error::Overflow { sample: 0, exponent });
    }
    let dir = f.gradient(&x)? + &model.reg * theta;
    Ok(dir * (model.alpha * exponent.exp()))
}

/// One-draw unbiased estimate of the gradient of `G`.
pub fn unbiased_grad_estimate(
    f: &ScalarField,
    model: &RiskModel,
    theta: &Vector,
    sampler: &mut GaussianSampler,
) -> Result<Vector> {
    if !f.has_gradient() {
        return Err(Error::MissingGradient);
    }
    if theta.len() != model.dim() || f.dim() != model.dim() {
        return Err(Error::dims("theta", model.dim(), theta.len()));
    }
    let mut rng = sampler.next_key().rng(0);
    let omega = sampler.draw(&mut rng);
    grad_sample_at(f, model, theta, &omega)
}

/// Per-coordinate mean of gradient samples, with standard errors and the mean
/// squared norm (an empirical second moment for step-size schedules).
#[derive(Debug, Clone)]
pub struct GradientBatch {
    pub mean: Vector,
    pub std_err: Vector,
    pub mean_sq_norm: f64,
}

#[derive(Default)]
struct GradAcc {
    coords: Vec<MeanAcc>,
    sq: MeanAcc,
}

/// Averages `n` unbiased gradient samples.
///
/// The standard errors assume `E[exp(2 alpha f) |grad f + R theta|^2]` is
/// finite. Nothing here checks that; bounded `f` with bounded gradient is
/// enough.
pub fn mean_grad_estimate(
    f: &ScalarField,
    model: &RiskModel,
    theta: &Vector,
    n: usize,
    sampler: &mut GaussianSampler,
) -> Result<GradientBatch> {
    if !f.has_gradient() {
        return Err(Error::MissingGradient);
    }
    if n == 0 {
        return Err(Error::contract("need at least one gradient sample"));
    }
    if theta.len() != model.dim() || f.dim() != model.dim() {
        return Err(Error::dims("theta", model.dim(), theta.len()));
    }
    let k = theta.len();
    let blocks = fold_samples(sampler, n, |acc: &mut GradAcc, i, omega| {
        let g = grad_sample_at(f, model, theta, omega).map_err(|e| match e {
            Error::Overflow { exponent, .. } => Error::Overflow { sample: i as usize, exponent },
            e => e,
        })?;
        if acc.coords.is_empty() {
            acc.coords = vec![MeanAcc::default(); k];
        }
        for (c, v) in acc.coords.iter_mut().zip(g.iter()) {
            c.push(*v);
        }
        acc.sq.push(g.norm_squared());
        Ok(())
    })?;
    let mut total = GradAcc { coords: vec![MeanAcc::default(); k], sq: MeanAcc::default() };
    for b in &blocks {
        for (t, c) in total.coords.iter_mut().zip(&b.coords) {
            t.merge(c);
        }
        total.sq.merge(&b.sq);
    }
    Ok(GradientBatch {
        mean: Vector::from_iterator(k, total.coords.iter().map(|c| c.mean())),
        std_err: Vector::from_iterator(k, total.coords.iter().map(|c| c.std_err())),
        mean_sq_norm: total.sq.mean(),
    })
}
