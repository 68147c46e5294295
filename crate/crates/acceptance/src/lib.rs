//! Support for the acceptance harness: criterion reporting, random problem
//! generators and the brute-force oracles the criteria compare against.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use riskvex::control::{
    rollout_with, ControlCost, ControlProblem, ControlRiskModel, Dynamics, Features, Policy, QuadraticStateCost,
    RolloutNoise,
};
use riskvex::objective::ScalarField;
use riskvex::sampler::standard_normal_vec;
use riskvex::{Matrix, Vector};

/// Verdict of one criterion plus a one-line account of what was measured.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

/// Runs one criterion, prints its verdict line and returns whether it passed.
/// Exceeding the time budget, when there is one, is a failure.
pub fn run_criterion(id: u32, name: &str, budget: Option<Duration>, check: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = check();
    let elapsed = start.elapsed().as_secs_f64();
    let in_time = budget.is_none_or(|b| elapsed <= b.as_secs_f64());
    let pass = outcome.pass && in_time;
    let timing = match budget {
        None => format!("{elapsed:.3} s"),
        Some(b) if in_time => format!("{elapsed:.3} s of {} s", b.as_secs_f64()),
        Some(b) => format!("{elapsed:.3} s, over the {} s budget", b.as_secs_f64()),
    };
    println!("criterion {id:>2} {} {name}: {} [{timing}]", if pass { "PASS" } else { "FAIL" }, outcome.detail);
    pass
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let v = standard_normal_vec(rng, rows * cols);
    Matrix::from_column_slice(rows, cols, v.as_slice())
}

/// Random rotation with eigenvalues drawn uniformly from `[lo, hi]`.
pub fn random_spd(rng: &mut ChaCha8Rng, dim: usize, lo: f64, hi: f64) -> Matrix {
    let q = normal_matrix(rng, dim, dim).qr().q();
    let d = Matrix::from_diagonal(&Vector::from_fn(dim, |_, _| uniform(rng, lo, hi)));
    let m = &q * d * q.transpose();
    (&m + m.transpose()) * 0.5
}

/// `f(x) = sum_j c_j sin(w_j' x + b_j)`, bounded by `sum |c_j|`.
#[derive(Debug, Clone)]
pub struct SineSum {
    pub c: Vec<f64>,
    pub w: Vec<Vector>,
    pub b: Vec<f64>,
}

impl SineSum {
    /// `terms` components with total amplitude `amplitude` and frequencies up to `max_freq`.
    pub fn random(rng: &mut ChaCha8Rng, dim: usize, terms: usize, amplitude: f64, max_freq: f64) -> Self {
        let raw: Vec<f64> = (0..terms).map(|_| uniform(rng, -1.0, 1.0)).collect();
        let scale = amplitude / raw.iter().map(|c| c.abs()).sum::<f64>();
        let c = raw.iter().map(|c| c * scale).collect();
        let w = (0..terms)
            .map(|_| {
                let d = standard_normal_vec(rng, dim);
                d.normalize() * uniform(rng, 0.2, max_freq)
            })
            .collect();
        let b = (0..terms).map(|_| uniform(rng, 0.0, std::f64::consts::TAU)).collect();
        Self { c, w, b }
    }

    pub fn value(&self, x: &Vector) -> f64 {
        self.c.iter().zip(&self.w).zip(&self.b).map(|((c, w), b)| c * (w.dot(x) + b).sin()).sum()
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        let mut g = Vector::zeros(x.len());
        for ((c, w), b) in self.c.iter().zip(&self.w).zip(&self.b) {
            g += w * (c * (w.dot(x) + b).cos());
        }
        g
    }

    pub fn bound(&self) -> f64 {
        self.c.iter().map(|c| c.abs()).sum()
    }

    pub fn lipschitz(&self) -> f64 {
        self.c.iter().zip(&self.w).map(|(c, w)| c.abs() * w.norm()).sum()
    }

    pub fn field(&self) -> ScalarField {
        let (v, g) = (self.clone(), self.clone());
        ScalarField::new(self.w[0].len(), self.bound(), move |x| v.value(x))
            .with_gradient(move |x| g.gradient(x))
            .with_lipschitz(self.lipschitz())
    }
}

/// `s' = A tanh(s) + B y + E xi` with a Gaussian initial state of scale `s0`.
#[derive(Debug, Clone)]
pub struct SmoothDynamics {
    pub a: Vec<Matrix>,
    pub b: Vec<Matrix>,
    pub e: Vec<Matrix>,
    pub s0: f64,
}

impl Dynamics for SmoothDynamics {
    fn horizon(&self) -> usize {
        self.a.len() + 1
    }
    fn state_dim(&self, _t: usize) -> usize {
        self.a[0].nrows()
    }
    fn control_dim(&self, t: usize) -> usize {
        self.b[t].ncols()
    }
    fn disturbance_dim(&self, t: usize) -> usize {
        self.e[t].ncols()
    }
    fn step(&self, s: &Vector, y: &Vector, xi: &Vector, t: usize) -> Vector {
        &self.a[t] * s.map(f64::tanh) + &self.b[t] * y + &self.e[t] * xi
    }
    fn jacobians(&self, s: &Vector, _y: &Vector, _xi: &Vector, t: usize) -> Option<(Matrix, Matrix)> {
        let d = Matrix::from_diagonal(&s.map(|v| 1.0 - v.tanh().powi(2)));
        Some((&self.a[t] * d, self.b[t].clone()))
    }
    fn initial_state(&self, rng: &mut ChaCha8Rng) -> Vector {
        standard_normal_vec(rng, self.a[0].nrows()) * self.s0
    }
}

/// Scales for [`random_smooth_problem`].
#[derive(Debug, Clone, Copy)]
pub struct SmoothScales {
    pub alpha: f64,
    pub gain: f64,
    pub state_cost: f64,
    pub noise: (f64, f64),
    pub disturbance: f64,
}

/// Random nonlinear problem with `n, m <= 3` and horizon up to 6, a certified
/// risk model (`alpha R_t = (1 + u) Sigma_t^{-1}`) and random gains.
pub fn random_smooth_problem(rng: &mut ChaCha8Rng, scales: SmoothScales, features: Arc<dyn Features>) -> (ControlProblem, Policy) {
    let n = rng.random_range(1..=3);
    let m = rng.random_range(1..=3);
    let horizon = rng.random_range(2..=6);
    let k = horizon - 1;
    let a = (0..k).map(|_| normal_matrix(rng, n, n) * (0.8 / (n as f64).sqrt())).collect();
    let b = (0..k).map(|_| normal_matrix(rng, n, m) * (0.5 / (m as f64).sqrt())).collect();
    let p = rng.random_range(1..=n);
    let e = (0..k).map(|_| normal_matrix(rng, n, p) * scales.disturbance).collect();
    let dynamics = Arc::new(SmoothDynamics { a, b, e, s0: 1.0 });
    let q = (0..horizon).map(|_| random_spd(rng, n, 0.0, scales.state_cost)).collect();
    let noise: Vec<Matrix> = (0..k).map(|_| random_spd(rng, m, scales.noise.0, scales.noise.1)).collect();
    let r = noise
        .iter()
        .map(|s| {
            let inv = s.clone().try_inverse().expect("SPD");
            inv * ((1.0 + uniform(rng, 0.0, 0.5)) / scales.alpha)
        })
        .collect();
    let cost = ControlCost::new(Arc::new(QuadraticStateCost { q }), r).expect("valid cost");
    let model = ControlRiskModel::new(scales.alpha, noise).expect("valid model");
    let problem = ControlProblem::new(dynamics, cost, model).expect("valid problem");
    let mut policy = Policy::zeros(problem.dynamics.as_ref(), features);
    for g in policy.gains.iter_mut() {
        *g = normal_matrix(rng, g.nrows(), g.ncols()) * scales.gain;
    }
    (problem, policy)
}

/// Central differences of `exp(alpha J)` in every gain entry under the frozen
/// noise realization, stacked in [`Policy::stacked`] order.
pub fn frozen_noise_gradient(problem: &ControlProblem, policy: &Policy, noise: &RolloutNoise, h: f64) -> Vector {
    let alpha = problem.model.alpha();
    let theta = policy.stacked();
    let value = |t: &Vector| (alpha * rollout_with(problem, &policy.with_stacked(t), noise).expect("rollout").cost).exp();
    Vector::from_fn(theta.len(), |i, _| {
        let mut up = theta.clone();
        let mut down = theta.clone();
        up[i] += h;
        down[i] -= h;
        (value(&up) - value(&down)) / (2.0 * h)
    })
}

/// Minimizes `objective` over a uniform grid on `[lo, hi]` with spacing
/// `resolution`. The grid is searched coarse to fine: each pass brackets the
/// best node by its neighbours and refines tenfold, which finds the dense-grid
/// minimizer of any unimodal objective.
pub fn grid_argmin(lo: f64, hi: f64, resolution: f64, mut objective: impl FnMut(f64) -> f64) -> (f64, usize) {
    let mut evaluations = 0;
    let mut step = resolution;
    while (hi - lo) / step > 40.0 {
        step *= 10.0;
    }
    let (mut a, mut b) = (lo, hi);
    loop {
        let nodes = ((b - a) / step).round() as usize;
        let mut best = (f64::INFINITY, a);
        for i in 0..=nodes {
            let x = (a + step * i as f64).min(hi);
            let v = objective(x);
            evaluations += 1;
            if v < best.0 {
                best = (v, x);
            }
        }
        if step <= resolution * 1.000_001 {
            return (best.1, evaluations);
        }
        a = (best.1 - step).max(lo);
        b = (best.1 + step).min(hi);
        step /= 10.0;
    }
}
