use super::gradient::{estimate_policy_gradient, GradientMethod};
use super::{ControlProblem, Policy};
use crate::error::{Error, Result};
use crate::sampler::Streams;
use crate::solver::{
    convergence_certificate, project, projected_sgd, resolve_radius, trace_table, variance_bound, FeasibleSet,
    SolverConfig, SolverReport, Zeta, PILOT_SAMPLES,
};
use crate::table::Table;

#[derive(Clone)]
pub struct TrainedPolicy {
    pub policy: Policy,
    pub report: SolverReport,
    /// Batch estimate of `E[exp(alpha J)]` at the iterate each gradient was taken at.
    pub exp_cost_trace: Vec<f64>,
}

impl TrainedPolicy {
    /// Solver trace with an extra `exp_cost` column.
    pub fn trace_table(&self) -> Table {
        let mut t = trace_table(&self.report.trace);
        t.header.push("exp_cost".into());
        for (row, c) in t.rows.iter_mut().zip(&self.exp_cost_trace) {
            row.push(*c);
        }
        t
    }
}

/// Projected stochastic gradient over the stacked gains. `constraint` lives in
/// the stacked coordinates of [`Policy::stacked`].
pub fn train_policy(
    problem: &ControlProblem,
    initial: &Policy,
    method: GradientMethod,
    config: &SolverConfig,
    constraint: &FeasibleSet,
    streams: &mut Streams,
) -> Result<TrainedPolicy> {
    problem.check_policy(initial)?;
    if config.iterations == 0 || config.batch == 0 {
        return Err(Error::contract("iterations and batch must be positive"));
    }
    let convexity = problem.certificate().worst();
    let radius = resolve_radius(constraint, config)?;
    let start = project(constraint, &initial.stacked())?;
    let zeta = match &config.zeta {
        Zeta::Fixed(z) => *z,
        Zeta::FromBound(inputs) => variance_bound(inputs)?,
        Zeta::Pilot => {
            let pilot = estimate_policy_gradient(problem, &initial.with_stacked(&start), method, PILOT_SAMPLES, streams)?;
            let z = pilot.mean_sq_norm.sqrt();
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
    let mut exp_cost_trace = Vec::with_capacity(config.iterations);
    let (theta_hat, final_theta, trace) =
        projected_sgd(start, constraint, radius, zeta, config.iterations, config.averaging, |i, theta| {
            let est = estimate_policy_gradient(problem, &initial.with_stacked(theta), method, config.batch, streams)
                .map_err(|e| match e {
                    Error::Overflow { .. } => Error::NonFiniteGradient { iter: i },
                    e => e,
                })?;
            exp_cost_trace.push(est.exp_cost.value);
            Ok(est.stacked_mean())
        })?;
    let report = SolverReport {
        theta_hat: theta_hat.clone(),
        final_theta,
        certificate: convergence_certificate(radius, zeta, config.iterations),
        zeta,
        radius,
        trace,
        convexity,
        objective_log_gap: None,
    };
    Ok(TrainedPolicy { policy: initial.with_stacked(&theta_hat), report, exp_cost_trace })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::control::{ControlCost, ConstantFeature, ControlRiskModel, LinearDynamics, ZeroStateCost};
    use crate::linalg::{Matrix, Vector};
    use crate::table::Table;

    /// Open-loop controls under a pure control penalty.
    fn penalty_problem() -> ControlProblem {
        ControlProblem::new(
            Arc::new(LinearDynamics::scalar(3, 1.0, 1.0, 1.0).unwrap()),
            ControlCost::new(Arc::new(ZeroStateCost), vec![Matrix::from_element(1, 1, 1.0); 2]).unwrap(),
            ControlRiskModel::isotropic(2.0, 1.0, &[1; 2]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn pure_penalty_drives_gains_to_zero() {
        let p = penalty_problem();
        let init = Policy::new(vec![Matrix::from_element(1, 1, 0.8); 2], Arc::new(ConstantFeature));
        let mut cfg = SolverConfig::new(300, Zeta::Pilot);
        cfg.batch = 64;
        cfg.radius = Some(2.0);
        let out = train_policy(&p, &init, GradientMethod::ModelBased, &cfg, &FeasibleSet::All, &mut Streams::new(1)).unwrap();
        assert!(out.policy.stacked().norm() < 0.1, "{}", out.policy.stacked());
        assert!(out.report.certificate_valid());
        let t = out.trace_table();
        assert_eq!(t.header.last().unwrap(), "exp_cost");
        assert_eq!(Table::read_from(t.to_csv_string().as_bytes()).unwrap(), t);
    }

    #[test]
    fn active_box_constraint_binds() {
        let p = penalty_problem();
        let init = Policy::new(vec![Matrix::from_element(1, 1, 0.8); 2], Arc::new(ConstantFeature));
        // K at the second step lives in [0.5, 1]; the first is free in [-1, 1]
        let set = FeasibleSet::boxed(Vector::from_row_slice(&[-1.0, 0.5]), Vector::from_row_slice(&[1.0, 1.0]));
        let mut cfg = SolverConfig::new(300, Zeta::Pilot);
        cfg.batch = 64;
        let out = train_policy(&p, &init, GradientMethod::DerivativeFree, &cfg, &set, &mut Streams::new(2)).unwrap();
        assert!(out.report.trace.iter().all(|r| r.theta[1] >= 0.5));
        assert!((out.policy.gains[1][(0, 0)] - 0.5).abs() < 0.05);
    }
}
