use rand_chacha::ChaCha8Rng;

use super::{ControlCost, ControlProblem, Policy};
use crate::error::{Error, Result};
use crate::linalg::{self, Vector};
use crate::objective::{MAX_EXPONENT, MC_BLOCK};
use crate::parallel;
use crate::sampler::{standard_normal_vec, StreamKey, Streams};
use crate::stats::{Estimate, LogExpAcc};
use crate::table::Table;

fn padded(v: Option<&Vector>, len: usize) -> impl Iterator<Item = f64> + '_ {
    (0..len).map(move |i| v.and_then(|v| v.get(i).copied()).unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RolloutMode {
    Noisy,
    /// `y_t = u_t` and mean disturbances.
    Mean,
}

/// Every random input of one rollout; replaying it gives the same trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutNoise {
    pub initial: Vector,
    /// Control perturbations `omega_t = y_t - u_t`.
    pub control: Vec<Vector>,
    pub disturbance: Vec<Vector>,
}

impl RolloutNoise {
    /// Draw order: initial state, then `(omega_t, xi_t)` for each step.
    pub fn sample(problem: &ControlProblem, rng: &mut ChaCha8Rng, mode: RolloutMode) -> Self {
        let dynamics = &*problem.dynamics;
        let initial = dynamics.initial_state(rng);
        let steps = problem.horizon() - 1;
        let mut control = Vec::with_capacity(steps);
        let mut disturbance = Vec::with_capacity(steps);
        for t in 0..steps {
            match mode {
                RolloutMode::Noisy => {
                    let z = standard_normal_vec(rng, dynamics.control_dim(t));
                    control.push(&problem.model.noise_root()[t] * z);
                    disturbance.push(dynamics.sample_disturbance(rng, t));
                }
                RolloutMode::Mean => {
                    control.push(Vector::zeros(dynamics.control_dim(t)));
                    disturbance.push(dynamics.mean_disturbance(t));
                }
            }
        }
        Self { initial, control, disturbance }
    }
}

/// Complete trajectory record.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub states: Vec<Vector>,
    pub features: Vec<Vector>,
    /// Mean controls `u_t = K_t phi_t`.
    pub controls: Vec<Vector>,
    /// Applied controls `y_t`.
    pub realized: Vec<Vector>,
    pub disturbances: Vec<Vector>,
    /// `l(s_t) + 1/2 u_t' R_t u_t` for `t < N - 1`, then the terminal cost.
    pub stage_costs: Vec<f64>,
    pub cost: f64,
    pub alpha: f64,
}

impl Rollout {
    /// `exp(alpha J)`; may be `inf`.
    pub fn exp_cost(&self) -> f64 {
        (self.alpha * self.cost).exp()
    }

    /// Recomputes `J` from the stored states and controls in accumulation order.
    pub fn recompute_cost(&self, cost: &ControlCost) -> f64 {
        let last = self.states.len() - 1;
        let mut j = 0.0;
        for t in 0..last {
            j += cost.state.value(&self.states[t], t);
            j += 0.5 * linalg::quad_form(&cost.control_weights[t], &self.controls[t]);
        }
        j + cost.state.value(&self.states[last], last)
    }

    /// Columns `t, s_*, u_*, y_*, stage_cost`; entries past a step's
    /// dimension (and controls at the terminal step) are NaN.
    pub fn to_table(&self) -> Table {
        let n = self.states.iter().map(|s| s.len()).max().unwrap_or(0);
        let m = self.controls.iter().map(|u| u.len()).max().unwrap_or(0);
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("s_{i}")));
        header.extend((0..m).map(|i| format!("u_{i}")));
        header.extend((0..m).map(|i| format!("y_{i}")));
        header.push("stage_cost".into());
        let mut table = Table { header, rows: Vec::with_capacity(self.states.len()) };
        for (t, s) in self.states.iter().enumerate() {
            let mut row = vec![t as f64];
            row.extend(padded(Some(s), n));
            row.extend(padded(self.controls.get(t), m));
            row.extend(padded(self.realized.get(t), m));
            row.push(self.stage_costs[t]);
            table.push(row);
        }
        table
    }
}

fn check_cost(problem: &ControlProblem, s: &Vector, t: usize) -> Result<f64> {
    let v = problem.cost.state.value(s, t);
    if v.is_nan() {
        return Err(Error::Divergence { t });
    }
    let bound = problem.cost.state.upper_bound();
    if v > bound {
        return Err(Error::BoundViolated { theta: s.iter().copied().collect(), value: v, bound });
    }
    Ok(v)
}

/// Simulates the closed loop with the given noise realization.
pub fn rollout_with(problem: &ControlProblem, policy: &Policy, noise: &RolloutNoise) -> Result<Rollout> {
    let dynamics = &*problem.dynamics;
    let n = problem.horizon();
    if noise.control.len() != n - 1 || noise.disturbance.len() != n - 1 {
        return Err(Error::dims("rollout noise steps", n - 1, noise.control.len()));
    }
    if noise.initial.len() != dynamics.state_dim(0) {
        return Err(Error::dims("initial state", dynamics.state_dim(0), noise.initial.len()));
    }
    let mut r = Rollout {
        states: Vec::with_capacity(n),
        features: Vec::with_capacity(n - 1),
        controls: Vec::with_capacity(n - 1),
        realized: Vec::with_capacity(n - 1),
        disturbances: noise.disturbance.clone(),
        stage_costs: Vec::with_capacity(n),
        cost: 0.0,
        alpha: problem.model.alpha(),
    };
    let mut s = noise.initial.clone();
    let mut j = 0.0;
    for t in 0..n - 1 {
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { t });
        }
        let phi = policy.features.value(&s, t);
        let u = &policy.gains[t] * &phi;
        let y = &u + &noise.control[t];
        let state_cost = check_cost(problem, &s, t)?;
        let control_cost = 0.5 * linalg::quad_form(&problem.cost.control_weights[t], &u);
        j += state_cost;
        j += control_cost;
        r.stage_costs.push(state_cost + control_cost);
        let next = dynamics.step(&s, &y, &noise.disturbance[t], t);
        if next.len() != dynamics.state_dim(t + 1) {
            return Err(Error::dims(format!("state at t = {}", t + 1), dynamics.state_dim(t + 1), next.len()));
        }
        r.states.push(std::mem::replace(&mut s, next));
        r.features.push(phi);
        r.controls.push(u);
        r.realized.push(y);
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { t: n - 1 });
    }
    let terminal = check_cost(problem, &s, n - 1)?;
    j += terminal;
    r.stage_costs.push(terminal);
    r.states.push(s);
    if !j.is_finite() {
        return Err(Error::Divergence { t: n - 1 });
    }
    r.cost = j;
    Ok(r)
}

/// Draws a noise realization from `rng` and simulates it.
pub fn rollout(problem: &ControlProblem, policy: &Policy, rng: &mut ChaCha8Rng, mode: RolloutMode) -> Result<Rollout> {
    problem.check_policy(policy)?;
    rollout_with(problem, policy, &RolloutNoise::sample(problem, rng, mode))
}

/// Runs `n` noisy rollouts, rollout `i` on generator `key.rng(i)`, folding
/// them into one accumulator per block (block order preserved).
pub(crate) fn fold_rollouts<A, F>(problem: &ControlProblem, policy: &Policy, n: usize, key: StreamKey, push: F) -> Result<Vec<A>>
where
    A: Default + Send,
    F: Fn(&mut A, u64, &RolloutNoise, Rollout) -> Result<()> + Sync + Send,
{
    problem.check_policy(policy)?;
    let blocks = parallel::chunks(n, MC_BLOCK);
    parallel::try_map_blocks(blocks.len(), |b| {
        let (start, len) = blocks[b];
        let mut acc = A::default();
        for i in start..start + len {
            let mut rng = key.rng(i as u64);
            let noise = RolloutNoise::sample(problem, &mut rng, RolloutMode::Noisy);
            let r = rollout_with(problem, policy, &noise)?;
            push(&mut acc, i as u64, &noise, r)?;
        }
        Ok(acc)
    })
}

fn log_exp_acc(problem: &ControlProblem, policy: &Policy, n: usize, streams: &mut Streams) -> Result<LogExpAcc> {
    if n < 2 {
        return Err(Error::contract(format!("need at least 2 rollouts, got {n}")));
    }
    let alpha = problem.model.alpha();
    let blocks = fold_rollouts(problem, policy, n, streams.next_key(), |acc: &mut LogExpAcc, i, _, r| {
        acc.push(alpha * r.cost, i);
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

/// Monte-Carlo `E[exp(alpha J)]` over `n` rollouts from a fresh stream.
pub fn estimate_exp_cost(problem: &ControlProblem, policy: &Policy, n: usize, streams: &mut Streams) -> Result<Estimate> {
    let acc = log_exp_acc(problem, policy, n, streams)?;
    let log_mean = acc.log_mean();
    if log_mean > MAX_EXPONENT {
        let (exponent, sample) = acc.max();
        return Err(Error::Overflow { sample: sample as usize, exponent });
    }
    let value = log_mean.exp();
    Ok(Estimate { value, std_err: value * acc.relative_std_err() })
}

/// Monte-Carlo `log E[exp(alpha J)]` (delta-method standard error).
pub fn estimate_log_exp_cost(problem: &ControlProblem, policy: &Policy, n: usize, streams: &mut Streams) -> Result<Estimate> {
    let acc = log_exp_acc(problem, policy, n, streams)?;
    Ok(Estimate { value: acc.log_mean(), std_err: acc.relative_std_err() })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::SeedableRng;

    use super::*;
    use crate::control::{
        ControlCost, ControlRiskModel, Features, LinearDynamics, QuadraticStateCost, StateFeatures, ZeroStateCost,
    };
    use crate::linalg::Matrix;
    use crate::table::Table;

    struct ShiftedState;
    impl Features for ShiftedState {
        fn dim(&self, n: usize, _t: usize) -> usize {
            n
        }
        fn value(&self, s: &Vector, _t: usize) -> Vector {
            s.add_scalar(1.0)
        }
    }

    fn scalar_problem(q: f64, r: f64) -> ControlProblem {
        let cost = ControlCost::new(
            Arc::new(QuadraticStateCost { q: vec![Matrix::from_element(1, 1, q); 3] }),
            vec![Matrix::from_element(1, 1, r); 2],
        )
        .unwrap();
        ControlProblem::new(
            Arc::new(LinearDynamics::scalar(3, 1.0, 1.0, 0.0).unwrap()),
            cost,
            ControlRiskModel::isotropic(1.0, 1.0, &[1, 1]).unwrap(),
        )
        .unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn zero_gains_mean_mode() {
        let p = scalar_problem(2.0, 1.0);
        let policy = Policy::zeros(&*p.dynamics, Arc::new(StateFeatures));
        let r = rollout(&p, &policy, &mut rng(), RolloutMode::Mean).unwrap();
        assert_eq!(r.cost, 0.0);
        assert!(r.controls.iter().all(|u| u[0] == 0.0));
        assert!(r.states.iter().all(|s| s[0] == 0.0));
        assert_eq!(r.exp_cost(), 1.0);
    }

    #[test]
    fn hand_simulated_trajectory() {
        let mut p = scalar_problem(0.0, 1.0);
        p.cost.state = Arc::new(ZeroStateCost);
        let policy = Policy::new(vec![Matrix::from_element(1, 1, 1.0); 2], Arc::new(ShiftedState));
        let r = rollout(&p, &policy, &mut rng(), RolloutMode::Mean).unwrap();
        let u: Vec<f64> = r.controls.iter().map(|u| u[0]).collect();
        let s: Vec<f64> = r.states.iter().map(|s| s[0]).collect();
        assert_eq!(u, vec![1.0, 2.0]);
        assert_eq!(s, vec![0.0, 1.0, 3.0]);
        assert_eq!(r.cost, 2.5);
    }

    #[test]
    fn recomputed_cost_is_bit_exact_and_csv_round_trips() {
        let p = scalar_problem(0.7, 1.3);
        let policy = Policy::new(vec![Matrix::from_element(1, 1, -0.4); 2], Arc::new(StateFeatures));
        let mut g = rng();
        for _ in 0..50 {
            let r = rollout(&p, &policy, &mut g, RolloutMode::Noisy).unwrap();
            assert_eq!(r.recompute_cost(&p.cost).to_bits(), r.cost.to_bits());
            let t = r.to_table();
            assert_eq!(t.header, vec!["t", "s_0", "u_0", "y_0", "stage_cost"]);
            let back = Table::read_from(t.to_csv_string().as_bytes()).unwrap();
            for (a, b) in back.rows.iter().flatten().zip(t.rows.iter().flatten()) {
                assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
            }
        }
    }

    #[test]
    fn divergence_names_the_step() {
        let p = ControlProblem::new(
            Arc::new(LinearDynamics::scalar(4, 1e308, 1.0, 0.0).unwrap()),
            ControlCost::new(Arc::new(ZeroStateCost), vec![Matrix::from_element(1, 1, 1.0); 3]).unwrap(),
            ControlRiskModel::isotropic(1.0, 1.0, &[1; 3]).unwrap(),
        )
        .unwrap();
        let policy = Policy::zeros(&*p.dynamics, Arc::new(StateFeatures));
        let noise = RolloutNoise {
            initial: Vector::from_element(1, 10.0),
            control: vec![Vector::zeros(1); 3],
            disturbance: vec![Vector::zeros(0); 3],
        };
        assert!(matches!(rollout_with(&p, &policy, &noise), Err(Error::Divergence { t: 1 })));
    }

    #[test]
    fn exp_cost_estimate_is_reproducible() {
        let p = scalar_problem(0.1, 1.0);
        let policy = Policy::new(vec![Matrix::from_element(1, 1, -0.3); 2], Arc::new(StateFeatures));
        let a = estimate_exp_cost(&p, &policy, 10_000, &mut Streams::new(3)).unwrap();
        let b = estimate_exp_cost(&p, &policy, 10_000, &mut Streams::new(3)).unwrap();
        assert_eq!(a, b);
        let l = estimate_log_exp_cost(&p, &policy, 10_000, &mut Streams::new(3)).unwrap();
        assert!((l.value - a.value.ln()).abs() < 1e-12);
    }
}
