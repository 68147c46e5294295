//! Linear binary classification with the convexified erfc loss.
//!
//! With Gaussian prediction noise of scale `sigma`, the per-example objective
//! in the prediction `p = theta' x` is
//!
//! ```text
//! log(erfc(y p / (sqrt(2) sigma)) / 2) + p^2 / (2 sigma^2)
//! ```
//!
//! which is convex in `p`. On separable data it decreases without bound (like
//! `-log |theta|`), so training stops on an iteration cap or a vanishing step.

use libm::erfc;
use rand::Rng;
use rand_distr::StandardNormal;

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::sampler::Streams;
use crate::table::Table;

const ASYMPTOTIC_FROM: f64 = 20.0;

/// `1 + sum_{k>=1} (-1)^k (2k-1)!! / (2 z^2)^k - 1`, i.e. the series tail of
/// `erfc(z) z sqrt(pi) exp(z^2)`, for `z >= 20`.
fn asymptotic_tail(z: f64) -> f64 {
    let x = 1.0 / (2.0 * z * z);
    let mut term = 1.0;
    let mut sum = 0.0;
    for k in 1..=8 {
        term *= -((2 * k - 1) as f64) * x;
        sum += term;
    }
    sum
}

/// `log(erfc(z) / 2)`, finite for every finite `z`.
pub fn log_half_erfc(z: f64) -> f64 {
    if z < ASYMPTOTIC_FROM {
        (0.5 * erfc(z)).ln()
    } else {
        -z * z - (2.0 * z * std::f64::consts::PI.sqrt()).ln() + asymptotic_tail(z).ln_1p()
    }
}

/// `h(z) = log(erfc(z) / 2) + z^2` and `h'(z)`.
fn data_term(z: f64) -> (f64, f64) {
    if z < ASYMPTOTIC_FROM {
        let c = erfc(z);
        let ratio = (-z * z).exp() / c;
        ((0.5 * c).ln() + z * z, 2.0 * z - 2.0 / std::f64::consts::PI.sqrt() * ratio)
    } else {
        let tail = asymptotic_tail(z);
        let value = -(2.0 * z * std::f64::consts::PI.sqrt()).ln() + tail.ln_1p();
        // 2z - 2z / (1 + tail)
        (value, 2.0 * z * tail / (1.0 + tail))
    }
}

/// Per-example convexified objective at weights `theta`.
///
/// Panics if `sigma <= 0`.
pub fn erfc_loss(theta: &Vector, x: &Vector, y: f64, sigma: f64) -> f64 {
    assert!(sigma > 0.0, "sigma must be positive");
    let p = theta.dot(x);
    let z = y * p / (std::f64::consts::SQRT_2 * sigma);
    // y^2 = 1 makes p^2 / (2 sigma^2) equal to z^2
    if y * y == 1.0 {
        data_term(z).0
    } else {
        log_half_erfc(z) + p * p / (2.0 * sigma * sigma)
    }
}

/// `sign` with ties broken to `+1`.
pub fn sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Replaces each label by `sign(y + sigma_noise * w)`, `w ~ N(0, 1)` independent.
pub fn corrupt_labels(data: &Dataset, sigma_noise: f64, streams: &mut Streams) -> Result<Dataset> {
    data.check_binary()?;
    if !(sigma_noise >= 0.0 && sigma_noise.is_finite()) {
        return Err(Error::contract(format!("noise scale must be finite and nonnegative, got {sigma_noise}")));
    }
    let mut rng = streams.next_key().rng(0);
    let mut out = data.clone();
    for y in out.labels.iter_mut() {
        let w: f64 = rng.sample(StandardNormal);
        *y = sign(*y + sigma_noise * w);
    }
    Ok(out)
}

/// Fraction of examples with `sign(theta' x) = y`.
pub fn accuracy(theta: &Vector, data: &Dataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let preds = &data.features * theta;
    let hits = preds.iter().zip(data.labels.iter()).filter(|(p, y)| sign(**p) == **y).count();
    hits as f64 / data.len() as f64
}

/// Mean objective over the dataset, scaled by `scale`, and its gradient.
pub fn classifier_objective(theta: &Vector, data: &Dataset, sigma: f64, scale: f64) -> (f64, Vector) {
    let c = 1.0 / (std::f64::consts::SQRT_2 * sigma);
    let preds = &data.features * theta;
    let mut value = 0.0;
    let mut dpred = Vector::zeros(data.len());
    for i in 0..data.len() {
        let y = data.labels[i];
        let (h, dh) = data_term(y * preds[i] * c);
        value += h;
        dpred[i] = dh * y * c;
    }
    let m = data.len() as f64;
    let grad = data.features.transpose() * dpred * (scale / m);
    (value * (scale / m), grad)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    pub sigma: f64,
    /// Positive multiplier on the objective (a risk factor); does not move the minimizer.
    pub scale: f64,
    pub max_iterations: usize,
    pub initial_step: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub grad_tol: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { sigma: 1.0, scale: 1.0, max_iterations: 500, initial_step: 1.0, max_step: 10.0, min_step: 1e-12, grad_tol: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierReport {
    pub theta: Vector,
    pub objective: f64,
    pub iterations: usize,
    pub train_accuracy: f64,
    /// `(iteration, objective, step, grad_norm)` after each accepted step.
    pub trace: Vec<[f64; 4]>,
}

impl ClassifierReport {
    pub fn trace_table(&self) -> Table {
        let mut t = Table::new(["iter", "objective", "step", "grad_norm"]);
        for row in &self.trace {
            t.push(row.to_vec());
        }
        t
    }
}

/// Full-batch normalized-gradient descent with Armijo backtracking from `theta = 0`.
pub fn train_classifier(data: &Dataset, config: &ClassifierConfig) -> Result<ClassifierReport> {
    data.check_binary()?;
    if data.is_empty() {
        return Err(Error::contract("empty training set"));
    }
    if !(config.sigma > 0.0 && config.scale > 0.0) {
        return Err(Error::contract("sigma and scale must be positive"));
    }
    let mut theta = Vector::zeros(data.dim());
    let (mut f, mut g) = classifier_objective(&theta, data, config.sigma, config.scale);
    let mut step = config.initial_step;
    let mut trace = Vec::new();
    let mut iterations = 0;
    while iterations < config.max_iterations {
        let gn = g.norm();
        if !(gn > config.grad_tol) {
            break;
        }
        iterations += 1;
        let dir = &g / -gn;
        let mut accepted = false;
        while step >= config.min_step {
            let cand = &theta + &dir * step;
            let (fc, gc) = classifier_objective(&cand, data, config.sigma, config.scale);
            if !fc.is_finite() {
                return Err(Error::NonFiniteGradient { iter: iterations });
            }
            if fc <= f - 1e-4 * step * gn {
                theta = cand;
                f = fc;
                g = gc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        trace.push([iterations as f64, f, step, g.norm()]);
        step = (step * 2.0).min(config.max_step);
    }
    let train_accuracy = accuracy(&theta, data);
    Ok(ClassifierReport { theta, objective: f, iterations, train_accuracy, trace })
}
