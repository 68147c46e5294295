//! Risk-sensitive policy optimization for finite-horizon systems.
//!
//! Time is zero-based: states `s_0 .. s_{N-1}`, controls `u_0 .. u_{N-2}`,
//! and the state cost at `t = N - 1` is the terminal cost. The policy is
//! linear in its gains, `u_t = K_t phi(s_t, t)`, and the applied control is
//! `y_t ~ N(u_t, Sigma_t)`. The objective is `E[exp(alpha J)]` with
//!
//! ```text
//! J = sum_{t < N-1} (l(s_t, t) + 1/2 u_t' R_t u_t) + l(s_{N-1}, N-1)
//! ```
//!
//! which is convex in the gains whenever `alpha R_t >= Sigma_t^{-1}` for all `t`.

mod gradient;
mod rollout;
mod train;

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::objective::{certificate_for, Certificate};
use crate::sampler::standard_normal_vec;

pub use gradient::{
    estimate_policy_gradient, gradient_sample, policy_gradient_derivative_free, policy_gradient_model_based,
    GradientMethod, PolicyGradientEstimate, PolicyGradientSample,
};
pub use rollout::{
    estimate_exp_cost, estimate_log_exp_cost, rollout, rollout_with, Rollout, RolloutMode, RolloutNoise,
};
pub use train::{train_policy, TrainedPolicy};

/// System transition `s_{t+1} = F(s_t, y_t, xi_t, t)`.
///
/// Dimensions may vary with `t`. `step` must be deterministic.
pub trait Dynamics: Send + Sync {
    /// Number of states `N` (at least 2).
    fn horizon(&self) -> usize;
    fn state_dim(&self, t: usize) -> usize;
    fn control_dim(&self, t: usize) -> usize;
    fn disturbance_dim(&self, _t: usize) -> usize {
        0
    }
    fn step(&self, s: &Vector, y: &Vector, xi: &Vector, t: usize) -> Vector;
    /// `(dF/ds, dF/dy)` at the given point.
    fn jacobians(&self, _s: &Vector, _y: &Vector, _xi: &Vector, _t: usize) -> Option<(Matrix, Matrix)> {
        None
    }
    fn sample_disturbance(&self, rng: &mut ChaCha8Rng, t: usize) -> Vector {
        standard_normal_vec(rng, self.disturbance_dim(t))
    }
    /// Disturbance used by [`RolloutMode::Mean`].
    fn mean_disturbance(&self, t: usize) -> Vector {
        Vector::zeros(self.disturbance_dim(t))
    }
    fn initial_state(&self, _rng: &mut ChaCha8Rng) -> Vector {
        Vector::zeros(self.state_dim(0))
    }
}

/// State cost `l(s, t)` for `t` up to and including the terminal index.
pub trait StateCost: Send + Sync {
    fn value(&self, s: &Vector, t: usize) -> f64;
    fn gradient(&self, _s: &Vector, _t: usize) -> Option<Vector> {
        None
    }
    fn upper_bound(&self) -> f64 {
        f64::INFINITY
    }
}

/// Policy features `phi(s, t)`.
pub trait Features: Send + Sync {
    fn dim(&self, state_dim: usize, t: usize) -> usize;
    fn value(&self, s: &Vector, t: usize) -> Vector;
    fn jacobian(&self, _s: &Vector, _t: usize) -> Option<Matrix> {
        None
    }
}

/// `s_{t+1} = A_t s_t + B_t y_t + E_t xi_t` with standard normal `xi_t`.
#[derive(Debug, Clone)]
pub struct LinearDynamics {
    pub a: Vec<Matrix>,
    pub b: Vec<Matrix>,
    pub e: Vec<Matrix>,
}

impl LinearDynamics {
    /// Noiseless system; `a` and `b` hold one entry per transition.
    pub fn new(a: Vec<Matrix>, b: Vec<Matrix>) -> Result<Self> {
        let e = a.iter().map(|a| Matrix::zeros(a.nrows(), 0)).collect();
        Self::with_disturbance(a, b, e)
    }

    pub fn with_disturbance(a: Vec<Matrix>, b: Vec<Matrix>, e: Vec<Matrix>) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::contract("linear dynamics need at least one transition"));
        }
        if b.len() != a.len() || e.len() != a.len() {
            return Err(Error::dims("transition count", a.len(), b.len().min(e.len())));
        }
        for t in 0..a.len() {
            let n_next = a[t].nrows();
            if t > 0 && a[t].ncols() != a[t - 1].nrows() {
                return Err(Error::dims(format!("A at t = {t}"), a[t - 1].nrows(), a[t].ncols()));
            }
            if b[t].nrows() != n_next {
                return Err(Error::dims(format!("B rows at t = {t}"), n_next, b[t].nrows()));
            }
            if e[t].nrows() != n_next {
                return Err(Error::dims(format!("E rows at t = {t}"), n_next, e[t].nrows()));
            }
        }
        Ok(Self { a, b, e })
    }

    /// Time-invariant scalar system `s' = a s + b y + e xi`.
    pub fn scalar(horizon: usize, a: f64, b: f64, e: f64) -> Result<Self> {
        let m = |v: f64| Matrix::from_element(1, 1, v);
        let k = horizon.saturating_sub(1);
        let e = if e == 0.0 { vec![Matrix::zeros(1, 0); k] } else { vec![m(e); k] };
        Self::with_disturbance(vec![m(a); k], vec![m(b); k], e)
    }
}

impl Dynamics for LinearDynamics {
    fn horizon(&self) -> usize {
        self.a.len() + 1
    }
    fn state_dim(&self, t: usize) -> usize {
        if t < self.a.len() {
            self.a[t].ncols()
        } else {
            self.a[t - 1].nrows()
        }
    }
    fn control_dim(&self, t: usize) -> usize {
        self.b[t].ncols()
    }
    fn disturbance_dim(&self, t: usize) -> usize {
        self.e[t].ncols()
    }
    fn step(&self, s: &Vector, y: &Vector, xi: &Vector, t: usize) -> Vector {
        &self.a[t] * s + &self.b[t] * y + &self.e[t] * xi
    }
    fn jacobians(&self, _s: &Vector, _y: &Vector, _xi: &Vector, t: usize) -> Option<(Matrix, Matrix)> {
        Some((self.a[t].clone(), self.b[t].clone()))
    }
}

/// `l(s, t) = 1/2 s' Q_t s`, one `Q_t` per state including the terminal one.
#[derive(Debug, Clone)]
pub struct QuadraticStateCost {
    pub q: Vec<Matrix>,
}

impl StateCost for QuadraticStateCost {
    fn value(&self, s: &Vector, t: usize) -> f64 {
        0.5 * linalg::quad_form(&self.q[t], s)
    }
    fn gradient(&self, s: &Vector, t: usize) -> Option<Vector> {
        Some(linalg::symmetrize(&self.q[t]) * s)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroStateCost;

impl StateCost for ZeroStateCost {
    fn value(&self, _s: &Vector, _t: usize) -> f64 {
        0.0
    }
    fn gradient(&self, s: &Vector, _t: usize) -> Option<Vector> {
        Some(Vector::zeros(s.len()))
    }
    fn upper_bound(&self) -> f64 {
        0.0
    }
}

/// `phi(s) = s`.
#[derive(Debug, Clone, Copy, Default)]
pub struct StateFeatures;

impl Features for StateFeatures {
    fn dim(&self, state_dim: usize, _t: usize) -> usize {
        state_dim
    }
    fn value(&self, s: &Vector, _t: usize) -> Vector {
        s.clone()
    }
    fn jacobian(&self, s: &Vector, _t: usize) -> Option<Matrix> {
        Some(Matrix::identity(s.len(), s.len()))
    }
}

/// `phi(s) = [1]`: open-loop controls `u_t = K_t`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantFeature;

impl Features for ConstantFeature {
    fn dim(&self, _state_dim: usize, _t: usize) -> usize {
        1
    }
    fn value(&self, _s: &Vector, _t: usize) -> Vector {
        Vector::from_element(1, 1.0)
    }
    fn jacobian(&self, s: &Vector, _t: usize) -> Option<Matrix> {
        Some(Matrix::zeros(1, s.len()))
    }
}

/// `phi(s) = [s; 1]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct AffineFeatures;

impl Features for AffineFeatures {
    fn dim(&self, state_dim: usize, _t: usize) -> usize {
        state_dim + 1
    }
    fn value(&self, s: &Vector, _t: usize) -> Vector {
        Vector::from_iterator(s.len() + 1, s.iter().copied().chain(std::iter::once(1.0)))
    }
    fn jacobian(&self, s: &Vector, _t: usize) -> Option<Matrix> {
        let n = s.len();
        Some(Matrix::from_fn(n + 1, n, |i, j| if i == j { 1.0 } else { 0.0 }))
    }
}

/// State cost plus quadratic control weights `R_t`, one per control step.
#[derive(Clone)]
pub struct ControlCost {
    pub state: Arc<dyn StateCost>,
    pub control_weights: Vec<Matrix>,
}

impl ControlCost {
    pub fn new(state: Arc<dyn StateCost>, control_weights: Vec<Matrix>) -> Result<Self> {
        for (t, r) in control_weights.iter().enumerate() {
            linalg::check_square(r, &format!("R at t = {t}"))?;
            let min = linalg::min_eigenvalue(&linalg::symmetrize(r));
            if min < -1e-12 * (1.0 + linalg::max_eigenvalue(&linalg::symmetrize(r)).abs()) {
                return Err(Error::NotDefinite { what: "positive semidefinite", min_eig: min });
            }
        }
        Ok(Self { state, control_weights })
    }
}

/// Linear-in-gains policy `u_t = K_t phi(s_t, t)`.
#[derive(Clone)]
pub struct Policy {
    pub gains: Vec<Matrix>,
    pub features: Arc<dyn Features>,
}

impl Policy {
    pub fn new(gains: Vec<Matrix>, features: Arc<dyn Features>) -> Self {
        Self { gains, features }
    }

    pub fn zeros(dynamics: &dyn Dynamics, features: Arc<dyn Features>) -> Self {
        let gains = (0..dynamics.horizon() - 1)
            .map(|t| Matrix::zeros(dynamics.control_dim(t), features.dim(dynamics.state_dim(t), t)))
            .collect();
        Self { gains, features }
    }

    pub fn num_params(&self) -> usize {
        self.gains.iter().map(|k| k.len()).sum()
    }

    /// Gains flattened in time order, each column-major.
    pub fn stacked(&self) -> Vector {
        Vector::from_iterator(self.num_params(), self.gains.iter().flat_map(|k| k.iter().copied()))
    }

    pub fn with_stacked(&self, theta: &Vector) -> Self {
        Self { gains: unstack(theta, &self.gains), features: self.features.clone() }
    }
}

/// Splits a flat vector into matrices shaped like `like`.
pub(crate) fn unstack(theta: &Vector, like: &[Matrix]) -> Vec<Matrix> {
    let mut offset = 0;
    like.iter()
        .map(|k| {
            let m = Matrix::from_column_slice(k.nrows(), k.ncols(), &theta.as_slice()[offset..offset + k.len()]);
            offset += k.len();
            m
        })
        .collect()
}

pub(crate) fn stack(ms: &[Matrix]) -> Vector {
    let len = ms.iter().map(|m| m.len()).sum();
    Vector::from_iterator(len, ms.iter().flat_map(|m| m.iter().copied()))
}

/// Risk factor and per-step control noise covariances.
#[derive(Debug, Clone)]
pub struct ControlRiskModel {
    alpha: f64,
    noise: Vec<Matrix>,
    noise_inv: Vec<Matrix>,
    noise_root: Vec<Matrix>,
}

impl ControlRiskModel {
    pub fn new(alpha: f64, noise: Vec<Matrix>) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::contract(format!("alpha must be positive and finite, got {alpha}")));
        }
        let noise_inv = noise.iter().map(linalg::spd_inverse).collect::<Result<Vec<_>>>()?;
        let noise_root = noise.iter().map(linalg::sqrt_psd).collect::<Result<Vec<_>>>()?;
        Ok(Self { alpha, noise, noise_inv, noise_root })
    }

    /// `Sigma_t = sigma^2 I_m` for every step.
    pub fn isotropic(alpha: f64, sigma: f64, dims: &[usize]) -> Result<Self> {
        Self::new(alpha, dims.iter().map(|&m| Matrix::identity(m, m) * (sigma * sigma)).collect())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn noise(&self) -> &[Matrix] {
        &self.noise
    }
    pub fn noise_inv(&self) -> &[Matrix] {
        &self.noise_inv
    }
    pub fn noise_root(&self) -> &[Matrix] {
        &self.noise_root
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(alpha, self.noise.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlCertificate {
    /// Per-step certificates for `alpha R_t - Sigma_t^{-1}`.
    pub steps: Vec<Certificate>,
    pub holds: bool,
}

impl ControlCertificate {
    pub fn margins(&self) -> Vec<f64> {
        self.steps.iter().map(|c| c.margin).collect()
    }

    /// The binding step, summarized as a single certificate.
    pub fn worst(&self) -> Certificate {
        self.steps
            .iter()
            .copied()
            .min_by(|a, b| (a.margin + a.tolerance).total_cmp(&(b.margin + b.tolerance)))
            .unwrap_or(Certificate { holds: true, margin: f64::INFINITY, tolerance: 0.0 })
    }
}

pub fn check_control_certificate(cost: &ControlCost, model: &ControlRiskModel) -> Result<ControlCertificate> {
    if cost.control_weights.len() != model.noise.len() {
        return Err(Error::dims("control steps", cost.control_weights.len(), model.noise.len()));
    }
    let mut steps = Vec::with_capacity(model.noise.len());
    for (t, (r, s_inv)) in cost.control_weights.iter().zip(&model.noise_inv).enumerate() {
        if r.shape() != s_inv.shape() {
            return Err(Error::dims(format!("R vs Sigma at t = {t}"), s_inv.nrows(), r.nrows()));
        }
        steps.push(certificate_for(model.alpha, r, s_inv));
    }
    let holds = steps.iter().all(|c| c.holds);
    Ok(ControlCertificate { steps, holds })
}

/// Dynamics, cost and risk model of one control problem.
#[derive(Clone)]
pub struct ControlProblem {
    pub dynamics: Arc<dyn Dynamics>,
    pub cost: ControlCost,
    pub model: ControlRiskModel,
}

impl ControlProblem {
    pub fn new(dynamics: Arc<dyn Dynamics>, cost: ControlCost, model: ControlRiskModel) -> Result<Self> {
        let n = dynamics.horizon();
        if n < 2 {
            return Err(Error::contract(format!("horizon must be at least 2, got {n}")));
        }
        if cost.control_weights.len() != n - 1 {
            return Err(Error::dims("control weights", n - 1, cost.control_weights.len()));
        }
        if model.noise.len() != n - 1 {
            return Err(Error::dims("control noise", n - 1, model.noise.len()));
        }
        for t in 0..n - 1 {
            let m = dynamics.control_dim(t);
            if cost.control_weights[t].nrows() != m {
                return Err(Error::dims(format!("R at t = {t}"), m, cost.control_weights[t].nrows()));
            }
            if model.noise[t].nrows() != m {
                return Err(Error::dims(format!("Sigma at t = {t}"), m, model.noise[t].nrows()));
            }
        }
        Ok(Self { dynamics, cost, model })
    }

    pub fn horizon(&self) -> usize {
        self.dynamics.horizon()
    }

    pub fn certificate(&self) -> ControlCertificate {
        check_control_certificate(&self.cost, &self.model).expect("dimensions validated on construction")
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Ok(Self { model: self.model.with_alpha(alpha)?, ..self.clone() })
    }

    pub fn check_policy(&self, policy: &Policy) -> Result<()> {
        let n = self.horizon();
        if policy.gains.len() != n - 1 {
            return Err(Error::dims("policy gains", n - 1, policy.gains.len()));
        }
        for (t, k) in policy.gains.iter().enumerate() {
            let m = self.dynamics.control_dim(t);
            let q = policy.features.dim(self.dynamics.state_dim(t), t);
            if k.nrows() != m {
                return Err(Error::dims(format!("gain rows at t = {t}"), m, k.nrows()));
            }
            if k.ncols() != q {
                return Err(Error::dims(format!("gain columns at t = {t}"), q, k.ncols()));
            }
        }
        Ok(())
    }
}
