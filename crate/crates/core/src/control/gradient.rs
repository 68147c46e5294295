//! Single-rollout gradient estimators of `E[exp(alpha J)]` with respect to the gains.
//!
//! Both estimators return `(direction_t, weight)` with `weight = exp(alpha J)`
//! such that `weight * direction_t` is an unbiased sample of the gradient with
//! respect to `K_t`.

use rand_chacha::ChaCha8Rng;

use super::rollout::{fold_rollouts, rollout_with, RolloutNoise};
use super::{stack, unstack, ControlProblem, Policy, RolloutMode};
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, Matrix, Vector};
use crate::objective::MAX_EXPONENT;
use crate::sampler::Streams;
use crate::stats::{Estimate, MeanAcc};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMethod {
    /// Pathwise derivative through the dynamics (adjoint recursion).
    ModelBased,
    /// Likelihood ratio through the control-noise density.
    DerivativeFree,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGradientSample {
    pub directions: Vec<Matrix>,
    /// Zero-mean part of `directions` (the noise score), for baselines.
    /// Empty for the model-based estimator.
    pub score: Vec<Matrix>,
    pub weight: f64,
    pub cost: f64,
}

impl PolicyGradientSample {
    /// `weight * direction_t` for every step.
    pub fn gradient(&self) -> Vec<Matrix> {
        self.directions.iter().map(|d| d * self.weight).collect()
    }
}

fn weight(alpha: f64, cost: f64) -> Result<f64> {
    let exponent = alpha * cost;
    if exponent > MAX_EXPONENT {
        return Err(Error::Overflow { sample: 0, exponent });
    }
    Ok(exponent.exp())
}

/// Pathwise gradient of `exp(alpha J)` under the frozen noise realization:
/// `direction_t = alpha dJ/dK_t`.
pub fn policy_gradient_model_based(problem: &ControlProblem, policy: &Policy, noise: &RolloutNoise) -> Result<PolicyGradientSample> {
    problem.check_policy(policy)?;
    let r = rollout_with(problem, policy, noise)?;
    let alpha = problem.model.alpha();
    let dynamics = &*problem.dynamics;
    let state = &*problem.cost.state;
    let last = r.states.len() - 1;
    let mut lambda = state.gradient(&r.states[last], last).ok_or(Error::MissingDerivative("state cost gradient"))?;
    let mut directions = vec![Matrix::zeros(0, 0); last];
    for t in (0..last).rev() {
        let (fs, fy) = dynamics
            .jacobians(&r.states[t], &r.realized[t], &r.disturbances[t], t)
            .ok_or(Error::MissingDerivative("dynamics jacobians"))?;
        let dphi = policy.features.jacobian(&r.states[t], t).ok_or(Error::MissingDerivative("feature jacobian"))?;
        let grad_l = state.gradient(&r.states[t], t).ok_or(Error::MissingDerivative("state cost gradient"))?;
        // dJ/du_t
        let v = symmetrize(&problem.cost.control_weights[t]) * &r.controls[t] + fy.transpose() * &lambda;
        directions[t] = (&v * r.features[t].transpose()) * alpha;
        lambda = grad_l + fs.transpose() * &lambda + dphi.transpose() * (policy.gains[t].transpose() * v);
    }
    Ok(PolicyGradientSample { directions, score: Vec::new(), weight: weight(alpha, r.cost)?, cost: r.cost })
}

/// Score-function gradient: `direction_t = (Sigma_t^{-1}(y_t - u_t) + alpha R_t u_t) phi_t'`.
pub fn policy_gradient_derivative_free(problem: &ControlProblem, policy: &Policy, noise: &RolloutNoise) -> Result<PolicyGradientSample> {
    problem.check_policy(policy)?;
    let r = rollout_with(problem, policy, noise)?;
    let alpha = problem.model.alpha();
    let mut directions = Vec::with_capacity(r.controls.len());
    let mut score = Vec::with_capacity(r.controls.len());
    for t in 0..r.controls.len() {
        let u = &r.controls[t];
        let phi_t = r.features[t].transpose();
        let s = (&problem.model.noise_inv()[t] * (&r.realized[t] - u)) * &phi_t;
        let penalty = (symmetrize(&problem.cost.control_weights[t]) * u * alpha) * &phi_t;
        directions.push(&s + penalty);
        score.push(s);
    }
    Ok(PolicyGradientSample { directions, score, weight: weight(alpha, r.cost)?, cost: r.cost })
}

fn sample_with(problem: &ControlProblem, policy: &Policy, method: GradientMethod, noise: &RolloutNoise) -> Result<PolicyGradientSample> {
    match method {
        GradientMethod::ModelBased => policy_gradient_model_based(problem, policy, noise),
        GradientMethod::DerivativeFree => policy_gradient_derivative_free(problem, policy, noise),
    }
}

/// Draws one noisy rollout from `rng` and returns its gradient sample.
pub fn gradient_sample(problem: &ControlProblem, policy: &Policy, method: GradientMethod, rng: &mut ChaCha8Rng) -> Result<PolicyGradientSample> {
    let noise = RolloutNoise::sample(problem, rng, RolloutMode::Noisy);
    sample_with(problem, policy, method, &noise)
}

/// Entrywise mean of `n` gradient samples with standard errors.
#[derive(Debug, Clone)]
pub struct PolicyGradientEstimate {
    pub mean: Vec<Matrix>,
    pub std_err: Vec<Matrix>,
    pub mean_sq_norm: f64,
    /// Mean of the rollout weights, an estimate of `E[exp(alpha J)]`.
    pub exp_cost: Estimate,
    pub n: usize,
}

impl PolicyGradientEstimate {
    pub fn stacked_mean(&self) -> Vector {
        stack(&self.mean)
    }

    pub fn stacked_std_err(&self) -> Vector {
        stack(&self.std_err)
    }
}

#[derive(Default)]
struct Acc {
    coords: Vec<MeanAcc>,
    sq: MeanAcc,
    weight: MeanAcc,
}

impl Acc {
    fn merge(&mut self, other: &Acc) {
        if self.coords.is_empty() {
            self.coords = vec![MeanAcc::default(); other.coords.len()];
        }
        for (a, b) in self.coords.iter_mut().zip(&other.coords) {
            a.merge(b);
        }
        self.sq.merge(&other.sq);
        self.weight.merge(&other.weight);
    }
}

pub fn estimate_policy_gradient(
    problem: &ControlProblem,
    policy: &Policy,
    method: GradientMethod,
    n: usize,
    streams: &mut Streams,
) -> Result<PolicyGradientEstimate> {
    if n == 0 {
        return Err(Error::contract("need at least one rollout"));
    }
    let k = policy.num_params();
    let blocks = fold_rollouts(problem, policy, n, streams.next_key(), |acc: &mut Acc, i, noise, _| {
        let s = sample_with(problem, policy, method, noise).map_err(|e| match e {
            Error::Overflow { exponent, .. } => Error::Overflow { sample: i as usize, exponent },
            e => e,
        })?;
        let g = stack(&s.gradient());
        if acc.coords.is_empty() {
            acc.coords = vec![MeanAcc::default(); k];
        }
        for (c, v) in acc.coords.iter_mut().zip(g.iter()) {
            c.push(*v);
        }
        acc.sq.push(g.norm_squared());
        acc.weight.push(s.weight);
        Ok(())
    })?;
    let mut total = Acc { coords: vec![MeanAcc::default(); k], ..Acc::default() };
    for b in &blocks {
        total.merge(b);
    }
    let mean = Vector::from_iterator(k, total.coords.iter().map(|c| c.mean()));
    let se = Vector::from_iterator(k, total.coords.iter().map(|c| c.std_err()));
    Ok(PolicyGradientEstimate {
        mean: unstack(&mean, &policy.gains),
        std_err: unstack(&se, &policy.gains),
        mean_sq_norm: total.sq.mean(),
        exp_cost: total.weight.estimate(),
        n,
    })
}
