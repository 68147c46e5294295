//! Sensitivity of a field to Gaussian perturbations and the suboptimality
//! certificates built from it.
//!
//! The sensitivity at `theta` is the scaled cumulant generating function of
//! the centered perturbation residual:
//!
//! ```text
//! S(theta) = (1/alpha) log E[exp(alpha (f(theta + omega) - E f(theta + omega)))]
//! ```
//!
//! It bounds how much worse the minimizer of the convexified problem is on the
//! smoothed original objective. For an `L`-Lipschitz field it never exceeds
//! `alpha L^2 lmax(Sigma) / 2`.

use crate::error::{Error, Result};
use crate::linalg::{self, Vector};
use crate::objective::{fold_samples, smoothed_value, RiskModel, ScalarField};
use crate::sampler::GaussianSampler;
use crate::stats::LogExpAcc;

pub const MIN_SENSITIVITY_SAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityEstimate {
    pub value: f64,
    pub std_err: f64,
    pub n: usize,
    pub theta: Vector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateKind {
    Estimated,
    Lipschitz,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuboptimalityCertificate {
    pub gap_bound: f64,
    pub kind: CertificateKind,
    pub alpha: f64,
    pub lambda_max: f64,
    pub lipschitz: Option<f64>,
    pub samples: Option<usize>,
}

/// Two-pass estimate: the smoothed mean and the exponential moment use
/// independent streams with `n` samples each.
pub fn estimate_sensitivity(
    f: &ScalarField,
    model: &RiskModel,
    theta: &Vector,
    n: usize,
    sampler: &mut GaussianSampler,
) -> Result<SensitivityEstimate> {
    if n < MIN_SENSITIVITY_SAMPLES {
        return Err(Error::contract(format!(
            "sensitivity needs at least {MIN_SENSITIVITY_SAMPLES} samples, got {n}"
        )));
    }
    let mean = smoothed_value(f, model, theta, n, sampler)?;
    let alpha = model.alpha();
    let center = mean.value;
    let blocks = fold_samples(sampler, n, |acc: &mut LogExpAcc, i, omega| {
        acc.push(alpha * (f.value(&(theta + omega))? - center), i);
        Ok(())
    })?;
    let mut acc = LogExpAcc::default();
    for b in &blocks {
        acc.merge(b);
    }
    if acc.is_degenerate() {
        return Err(Error::DegenerateEstimate);
    }
    let moment_se = acc.relative_std_err() / alpha;
    Ok(SensitivityEstimate {
        value: acc.log_mean() / alpha,
        std_err: moment_se.hypot(mean.std_err),
        n,
        theta: theta.clone(),
    })
}

/// `alpha L^2 lmax(Sigma) / 2`
pub fn lipschitz_gap_bound(l: f64, model: &RiskModel) -> Result<SuboptimalityCertificate> {
    if !(l.is_finite() && l >= 0.0) {
        return Err(Error::contract(format!("Lipschitz constant must be finite and nonnegative, got {l}")));
    }
    let lambda_max = linalg::max_eigenvalue(model.sigma());
    Ok(SuboptimalityCertificate {
        gap_bound: model.alpha() * l * l * lambda_max / 2.0,
        kind: CertificateKind::Lipschitz,
        alpha: model.alpha(),
        lambda_max,
        lipschitz: Some(l),
        samples: None,
    })
}

/// Upper confidence bound (`value + 3 std_err`) on the sensitivity at a
/// user-supplied comparison point.
pub fn certify_gap(
    f: &ScalarField,
    model: &RiskModel,
    theta: &Vector,
    n: usize,
    sampler: &mut GaussianSampler,
) -> Result<SuboptimalityCertificate> {
    let s = estimate_sensitivity(f, model, theta, n, sampler)?;
    Ok(SuboptimalityCertificate {
        gap_bound: s.value + 3.0 * s.std_err,
        kind: CertificateKind::Estimated,
        alpha: model.alpha(),
        lambda_max: linalg::max_eigenvalue(model.sigma()),
        lipschitz: f.lipschitz(),
        samples: Some(n),
    })
}
