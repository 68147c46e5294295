//! Feed-forward network with noisy pre-activations, trained as a control problem.
//!
//! Layer `t` is a time step: the state is `[a_t; target]`, the control is the
//! pre-activation `y_t = K_t [a_t; 1] + omega_t` with `omega_t ~ N(0, sigma_t^2 I)`,
//! and `a_{t+1} = tanh(y_t)` (the output layer may be linear). The objective is
//!
//! ```text
//! E[exp(alpha l(a_N, target) + sum_t penalty / 2 |K_t [a_t; 1]|^2 / sigma_t^2)]
//! ```
//!
//! i.e. control weights `R_t = penalty Sigma_t^{-1} / alpha`, certified iff `penalty >= 1`.
//! The data point enters through the initial state, drawn uniformly from the
//! training set.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::dataset::Dataset;
use crate::control::{
    train_policy, ControlCost, ControlProblem, ControlRiskModel, Dynamics, Features, GradientMethod, Policy, StateCost,
};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::objective::{clamp_bounded, ScalarField};
use crate::sampler::Streams;
use crate::solver::{FeasibleSet, SolverConfig, SolverReport, Zeta};
use crate::table::Table;

/// Per-example loss between the network output and the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegressionLoss {
    /// `|e|^2`.
    Squared,
    /// `sqrt(|e|^2 + delta^2) - delta`.
    Absolute { delta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyNetConfig {
    pub hidden: Vec<usize>,
    pub loss: RegressionLoss,
    pub method: GradientMethod,
    /// Pre-activation noise scale per layer (hidden layers, then the output).
    pub sigma: Vec<f64>,
    pub alpha: f64,
    pub penalty: f64,
    /// Bound of the soft-clamped squared loss.
    pub loss_bound: f64,
    pub linear_output: bool,
    /// Train even when the convexity certificate fails.
    pub force: bool,
    pub iterations: usize,
    pub batch: usize,
    /// Gradient scale for the step sizes; estimated by a pilot batch when `None`.
    pub zeta: Option<f64>,
    /// Radius of the ball the stacked weights are projected onto.
    pub weight_radius: f64,
    pub init_scale: f64,
    /// Learning-curve resolution in iterations.
    pub eval_every: usize,
}

impl Default for NoisyNetConfig {
    fn default() -> Self {
        Self {
            hidden: vec![20],
            loss: RegressionLoss::Squared,
            method: GradientMethod::DerivativeFree,
            sigma: vec![0.5, 0.5],
            alpha: 20.0,
            penalty: 1.0,
            loss_bound: 2.0,
            linear_output: true,
            force: false,
            iterations: 4000,
            batch: 32,
            zeta: None,
            weight_radius: 5.0,
            init_scale: 0.1,
            eval_every: 100,
        }
    }
}

impl NoisyNetConfig {
    fn widths(&self, input: usize, output: usize) -> Vec<usize> {
        let mut w = vec![input];
        w.extend(&self.hidden);
        w.push(output);
        w
    }
}

/// Network dynamics; the training set is sampled for the initial state.
pub struct NetDynamics {
    widths: Vec<usize>,
    target_dim: usize,
    linear_output: bool,
    data: Arc<Dataset>,
}

impl NetDynamics {
    fn is_linear(&self, t: usize) -> bool {
        self.linear_output && t + 2 == self.widths.len()
    }
}

impl Dynamics for NetDynamics {
    fn horizon(&self) -> usize {
        self.widths.len()
    }
    fn state_dim(&self, t: usize) -> usize {
        self.widths[t] + self.target_dim
    }
    fn control_dim(&self, t: usize) -> usize {
        self.widths[t + 1]
    }
    fn step(&self, s: &Vector, y: &Vector, _xi: &Vector, t: usize) -> Vector {
        let act = if self.is_linear(t) { y.clone() } else { y.map(f64::tanh) };
        let target = s.rows(self.widths[t], self.target_dim);
        Vector::from_iterator(act.len() + self.target_dim, act.iter().chain(target.iter()).copied())
    }
    fn jacobians(&self, _s: &Vector, y: &Vector, _xi: &Vector, t: usize) -> Option<(Matrix, Matrix)> {
        let (n_in, n_out, k) = (self.widths[t], self.widths[t + 1], self.target_dim);
        let mut fs = Matrix::zeros(n_out + k, n_in + k);
        fs.view_mut((n_out, n_in), (k, k)).fill_with_identity();
        let mut fy = Matrix::zeros(n_out + k, n_out);
        for i in 0..n_out {
            fy[(i, i)] = if self.is_linear(t) { 1.0 } else { 1.0 - y[i].tanh().powi(2) };
        }
        Some((fs, fy))
    }
    fn initial_state(&self, rng: &mut ChaCha8Rng) -> Vector {
        let i = rng.random_range(0..self.data.len());
        example_state(&self.data, i)
    }
}

fn example_state(data: &Dataset, i: usize) -> Vector {
    let x = data.features.row(i);
    Vector::from_iterator(x.len() + 1, x.iter().copied().chain(std::iter::once(data.labels[i])))
}

/// `[a; 1]`, dropping the target part of the state.
pub struct NetFeatures {
    target_dim: usize,
}

impl Features for NetFeatures {
    fn dim(&self, state_dim: usize, _t: usize) -> usize {
        state_dim - self.target_dim + 1
    }
    fn value(&self, s: &Vector, _t: usize) -> Vector {
        let n = s.len() - self.target_dim;
        Vector::from_iterator(n + 1, s.rows(0, n).iter().copied().chain(std::iter::once(1.0)))
    }
    fn jacobian(&self, s: &Vector, _t: usize) -> Option<Matrix> {
        let n = s.len() - self.target_dim;
        Some(Matrix::from_fn(n + 1, s.len(), |i, j| if i == j && i < n { 1.0 } else { 0.0 }))
    }
}

/// Clamped squared error at the last layer, zero before.
pub struct TerminalLoss {
    horizon: usize,
    loss: ScalarField,
}

impl StateCost for TerminalLoss {
    fn value(&self, s: &Vector, t: usize) -> f64 {
        if t + 1 < self.horizon {
            0.0
        } else {
            self.loss.value(s).unwrap_or(f64::NAN)
        }
    }
    fn gradient(&self, s: &Vector, t: usize) -> Option<Vector> {
        if t + 1 < self.horizon {
            Some(Vector::zeros(s.len()))
        } else {
            self.loss.gradient(s).ok()
        }
    }
    fn upper_bound(&self) -> f64 {
        self.loss.upper_bound()
    }
}

/// The loss of `a - target` on the state `[a; target]`.
fn output_loss(k: usize, loss: RegressionLoss) -> ScalarField {
    let field = move |s: &Vector| {
        let e2 = (s.rows(0, k) - s.rows(k, k)).norm_squared();
        match loss {
            RegressionLoss::Squared => e2,
            RegressionLoss::Absolute { delta } => (e2 + delta * delta).sqrt() - delta,
        }
    };
    let gradient = move |s: &Vector| {
        let e = s.rows(0, k) - s.rows(k, k);
        let d = match loss {
            RegressionLoss::Squared => e * 2.0,
            RegressionLoss::Absolute { delta } => {
                let r = (e.norm_squared() + delta * delta).sqrt();
                e / r
            }
        };
        Vector::from_iterator(2 * k, d.iter().copied().chain(d.iter().map(|v| -v)))
    };
    ScalarField::new(2 * k, f64::INFINITY, field).with_gradient(gradient)
}

pub struct NoisyNet {
    pub problem: ControlProblem,
    pub policy: Policy,
    widths: Vec<usize>,
    linear_output: bool,
}

impl NoisyNet {
    /// Builds the control problem for regression on `train` (labels are the targets).
    pub fn new(train: Arc<Dataset>, config: &NoisyNetConfig, streams: &mut Streams) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::contract("empty training set"));
        }
        let widths = config.widths(train.dim(), 1);
        let layers = widths.len() - 1;
        if config.sigma.len() != layers {
            return Err(Error::dims("per-layer noise scales", layers, config.sigma.len()));
        }
        if let RegressionLoss::Absolute { delta } = config.loss {
            if !(delta > 0.0) {
                return Err(Error::contract("absolute loss needs a positive smoothing width"));
            }
        }
        if !(config.penalty > 0.0) {
            return Err(Error::contract("penalty must be positive"));
        }
        let dynamics = NetDynamics { widths: widths.clone(), target_dim: 1, linear_output: config.linear_output, data: train };
        let noise: Vec<Matrix> = (0..layers).map(|t| Matrix::identity(widths[t + 1], widths[t + 1]) * config.sigma[t].powi(2)).collect();
        let model = ControlRiskModel::new(config.alpha, noise)?;
        let weights = model.noise_inv().iter().map(|s| s * (config.penalty / config.alpha)).collect();
        let loss = clamp_bounded(output_loss(1, config.loss), config.loss_bound)?;
        let cost = ControlCost::new(Arc::new(TerminalLoss { horizon: widths.len(), loss }), weights)?;
        let problem = ControlProblem::new(Arc::new(dynamics), cost, model)?;
        let mut rng = streams.next_key().rng(0);
        let gains = (0..layers)
            .map(|t| {
                let fan_in = widths[t] + 1;
                let scale = config.init_scale / (fan_in as f64).sqrt();
                Matrix::from_fn(widths[t + 1], fan_in, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
            })
            .collect();
        let policy = Policy::new(gains, Arc::new(NetFeatures { target_dim: 1 }));
        Ok(Self { problem, policy, widths, linear_output: config.linear_output })
    }

    /// Noise-free forward pass.
    pub fn predict(&self, policy: &Policy, x: &Vector) -> f64 {
        let mut a = x.clone();
        for (t, k) in policy.gains.iter().enumerate() {
            let phi = Vector::from_iterator(a.len() + 1, a.iter().copied().chain(std::iter::once(1.0)));
            let y = k * phi;
            a = if self.linear_output && t + 2 == self.widths.len() { y } else { y.map(f64::tanh) };
        }
        a[0]
    }

    /// Mean squared error of the noise-free network.
    pub fn mse(&self, policy: &Policy, data: &Dataset) -> f64 {
        let total: f64 = (0..data.len()).map(|i| (self.predict(policy, &data.example(i)) - data.labels[i]).powi(2)).sum();
        total / data.len() as f64
    }
}

#[derive(Clone)]
pub struct NoisyNetReport {
    pub policy: Policy,
    pub train_mse: f64,
    pub test_mse: Option<f64>,
    /// Rows `(evaluations, train_loss, test_loss)`; `test_loss` is NaN without a test set.
    pub curve: Vec<[f64; 3]>,
    pub certified: bool,
    pub solver: SolverReport,
}

impl NoisyNetReport {
    pub fn curve_table(&self) -> Table {
        let mut t = Table::new(["evaluations", "train_loss", "test_loss"]);
        for r in &self.curve {
            t.push(r.to_vec());
        }
        t
    }
}

/// Trains with projected stochastic gradient on the stacked weights. The learning curve is
/// evaluated at the running average of the iterates, which is what the
/// solver returns.
pub fn train_noisy_net(train: &Dataset, test: Option<&Dataset>, config: &NoisyNetConfig, streams: &mut Streams) -> Result<NoisyNetReport> {
    let net = NoisyNet::new(Arc::new(train.clone()), config, streams)?;
    let cert = net.problem.certificate();
    if !cert.holds && !config.force {
        let w = cert.worst();
        return Err(Error::Uncertified { margin: w.margin, tolerance: w.tolerance });
    }
    let mut solver = SolverConfig::new(config.iterations, config.zeta.map_or(Zeta::Pilot, Zeta::Fixed));
    solver.batch = config.batch;
    let ball = FeasibleSet::ball(Vector::zeros(net.policy.num_params()), config.weight_radius);
    let trained = train_policy(&net.problem, &net.policy, config.method, &solver, &ball, streams)?;
    let every = config.eval_every.max(1);
    let mut curve = Vec::new();
    let mut running = Vector::zeros(net.policy.num_params());
    let pilot = crate::solver::PILOT_SAMPLES as f64;
    for (i, row) in trained.report.trace.iter().enumerate() {
        running += &row.theta;
        let done = i + 1;
        if done % every == 0 || done == trained.report.trace.len() {
            let p = net.policy.with_stacked(&(&running / done as f64));
            let test_loss = test.map_or(f64::NAN, |d| net.mse(&p, d));
            curve.push([pilot + (done * config.batch) as f64, net.mse(&p, train), test_loss]);
        }
    }
    let policy = trained.policy;
    Ok(NoisyNetReport {
        solver: trained.report,
        train_mse: net.mse(&policy, train),
        test_mse: test.map(|d| net.mse(&policy, d)),
        policy,
        curve,
        certified: cert.holds,
    })
}

/// Noise-free MSE of stored weights on `data`.
pub fn evaluate_noisy_net(gains: &[Matrix], data: &Dataset, config: &NoisyNetConfig) -> Result<f64> {
    let net = NoisyNet::new(Arc::new(data.clone()), config, &mut Streams::new(0))?;
    let policy = Policy::new(gains.to_vec(), net.policy.features.clone());
    net.problem.check_policy(&policy)?;
    Ok(net.mse(&policy, data))
}
