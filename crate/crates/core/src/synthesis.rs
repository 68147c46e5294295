//! Structured linear feedback for noiseless linear systems with quadratic costs.
//!
//! With `y = K x + omega`, `x = M y` and `omega ~ N(0, Sigma)`, the risk
//! objective has the closed form
//!
//! ```text
//! E[exp(alpha J(K))] = sqrt(det S / det W(K))          if W(K) > 0, else +inf
//! W(K) = S - S K M - M' K' S - M' (K' (alpha R - S) K + alpha Q) M
//! ```
//!
//! with block-diagonal `S = Sigma^{-1}`, `R`, `Q` and `K` holding `K_t` at
//! block `(t, t)`. Minimizing the expectation is maximizing `log det W`,
//! which is concave in `K` when `alpha R >= S`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::control::{ControlCost, ControlProblem, ControlRiskModel, LinearDynamics, Policy, QuadraticStateCost, StateFeatures};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::objective::psd_tolerance;
use crate::solver::{project, FeasibleSet};
use crate::table::Table;

/// `s_{t+1} = A_t s_t + B_t y_t`, costs `1/2 s_t' Q_t s_t` and `1/2 u_t' R_t u_t`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub a: Vec<Matrix>,
    pub b: Vec<Matrix>,
    /// One per state, including the terminal one.
    pub q: Vec<Matrix>,
    pub r: Vec<Matrix>,
}

impl LinearSystem {
    pub fn new(a: Vec<Matrix>, b: Vec<Matrix>, q: Vec<Matrix>, r: Vec<Matrix>) -> Result<Self> {
        let sys = Self { a, b, q, r };
        sys.validate()?;
        Ok(sys)
    }

    /// Time-invariant scalar system.
    pub fn scalar(horizon: usize, a: f64, b: f64, q: f64, r: f64) -> Result<Self> {
        let m = |v: f64| Matrix::from_element(1, 1, v);
        let k = horizon.saturating_sub(1);
        Self::new(vec![m(a); k], vec![m(b); k], vec![m(q); horizon], vec![m(r); k])
    }

    pub fn horizon(&self) -> usize {
        self.a.len() + 1
    }

    pub fn state_dim(&self) -> usize {
        self.a[0].nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.b[0].ncols()
    }

    fn validate(&self) -> Result<()> {
        let k = self.a.len();
        if k == 0 {
            return Err(Error::contract("horizon must be at least 2"));
        }
        if self.b.len() != k || self.r.len() != k {
            return Err(Error::dims("control steps", k, self.b.len().min(self.r.len())));
        }
        if self.q.len() != k + 1 {
            return Err(Error::dims("state cost count", k + 1, self.q.len()));
        }
        let n = self.a[0].nrows();
        let m = self.b[0].ncols();
        for t in 0..k {
            if self.a[t].shape() != (n, n) {
                return Err(Error::dims(format!("A at t = {t}"), n, self.a[t].nrows()));
            }
            if self.b[t].shape() != (n, m) {
                return Err(Error::dims(format!("B at t = {t}"), m, self.b[t].ncols()));
            }
            if self.r[t].shape() != (m, m) {
                return Err(Error::dims(format!("R at t = {t}"), m, self.r[t].nrows()));
            }
        }
        for (t, q) in self.q.iter().enumerate() {
            if q.shape() != (n, n) {
                return Err(Error::dims(format!("Q at t = {t}"), n, q.nrows()));
            }
            let sym = linalg::symmetrize(q);
            let min = linalg::min_eigenvalue(&sym);
            if min < -1e-12 * (1.0 + linalg::max_eigenvalue(&sym).abs()) {
                return Err(Error::NotDefinite { what: "positive semidefinite", min_eig: min });
            }
        }
        Ok(())
    }

    fn check_model(&self, model: &ControlRiskModel) -> Result<()> {
        let k = self.a.len();
        if model.noise().len() != k {
            return Err(Error::dims("control noise steps", k, model.noise().len()));
        }
        let m = self.control_dim();
        for (t, s) in model.noise().iter().enumerate() {
            if s.nrows() != m {
                return Err(Error::dims(format!("Sigma at t = {t}"), m, s.nrows()));
            }
        }
        Ok(())
    }

    fn check_gains(&self, gains: &[Matrix]) -> Result<()> {
        if gains.len() != self.a.len() {
            return Err(Error::dims("gains", self.a.len(), gains.len()));
        }
        let shape = (self.control_dim(), self.state_dim());
        for (t, k) in gains.iter().enumerate() {
            if k.shape() != shape {
                return Err(Error::dims(format!("gain at t = {t}"), shape.0 * shape.1, k.len()));
            }
        }
        Ok(())
    }

    pub fn zero_gains(&self) -> Vec<Matrix> {
        vec![Matrix::zeros(self.control_dim(), self.state_dim()); self.a.len()]
    }

    /// The same problem as a rollout-based control problem (state features, no disturbance).
    pub fn control_problem(&self, model: &ControlRiskModel) -> Result<ControlProblem> {
        self.check_model(model)?;
        let dynamics = LinearDynamics::new(self.a.clone(), self.b.clone())?;
        let cost = ControlCost::new(Arc::new(QuadraticStateCost { q: self.q.clone() }), self.r.clone())?;
        ControlProblem::new(Arc::new(dynamics), cost, model.clone())
    }

    pub fn policy(&self, gains: &[Matrix]) -> Policy {
        Policy::new(gains.to_vec(), Arc::new(StateFeatures))
    }
}

#[derive(Debug, Clone)]
pub struct BlockOperators {
    /// Trajectory map `x = M y`, `(N n) x ((N-1) m)`.
    pub trajectory: Matrix,
    /// `blockdiag(Sigma_t^{-1})`.
    pub precision: Matrix,
    pub control_weight: Matrix,
    pub state_weight: Matrix,
    pub state_dim: usize,
    pub control_dim: usize,
    pub horizon: usize,
}

impl BlockOperators {
    /// `K_t` placed at block `(t, t)` of an `((N-1) m) x (N n)` matrix.
    pub fn place_gains(&self, gains: &[Matrix]) -> Matrix {
        let (n, m) = (self.state_dim, self.control_dim);
        let mut k = Matrix::zeros((self.horizon - 1) * m, self.horizon * n);
        for (t, g) in gains.iter().enumerate() {
            k.view_mut((t * m, t * n), (m, n)).copy_from(g);
        }
        k
    }

    fn diagonal_blocks(&self, full: &Matrix) -> Vec<Matrix> {
        let (n, m) = (self.state_dim, self.control_dim);
        (0..self.horizon - 1).map(|t| full.view((t * m, t * n), (m, n)).into_owned()).collect()
    }

    /// `W(K)`, symmetrized.
    pub fn w(&self, alpha: f64, gains: &[Matrix]) -> Matrix {
        let k = self.place_gains(gains);
        let s = &self.precision;
        let mt = self.trajectory.transpose();
        let skm = s * &k * &self.trajectory;
        let p = &self.control_weight * alpha - s;
        let inner = k.transpose() * p * &k + &self.state_weight * alpha;
        let w = s - &skm - skm.transpose() - &mt * inner * &self.trajectory;
        linalg::symmetrize(&w)
    }
}

fn block_diag(blocks: &[Matrix]) -> Matrix {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let (mut i, mut j) = (0, 0);
    for b in blocks {
        out.view_mut((i, j), b.shape()).copy_from(b);
        i += b.nrows();
        j += b.ncols();
    }
    out
}

pub fn build_block_operators(sys: &LinearSystem, model: &ControlRiskModel) -> Result<BlockOperators> {
    sys.validate()?;
    sys.check_model(model)?;
    let (n, m, horizon) = (sys.state_dim(), sys.control_dim(), sys.horizon());
    let mut trajectory = Matrix::zeros(horizon * n, (horizon - 1) * m);
    for j in 0..horizon - 1 {
        let mut block = sys.b[j].clone();
        trajectory.view_mut(((j + 1) * n, j * m), (n, m)).copy_from(&block);
        for i in j + 1..horizon - 1 {
            block = &sys.a[i] * block;
            trajectory.view_mut(((i + 1) * n, j * m), (n, m)).copy_from(&block);
        }
    }
    Ok(BlockOperators {
        trajectory,
        precision: block_diag(model.noise_inv()),
        control_weight: block_diag(&sys.r),
        state_weight: block_diag(&sys.q),
        state_dim: n,
        control_dim: m,
        horizon,
    })
}

#[derive(Debug, Clone)]
pub struct DetMaxValue {
    /// `log det W`, or `None` when `W` is not positive definite.
    pub log_det: Option<f64>,
    pub w: Matrix,
    pub min_eig: f64,
}

impl DetMaxValue {
    pub fn feasible(&self) -> bool {
        self.log_det.is_some()
    }
}

fn evaluate(ops: &BlockOperators, alpha: f64, gains: &[Matrix], tol: f64) -> DetMaxValue {
    let w = ops.w(alpha, gains);
    let min_eig = linalg::min_eigenvalue(&w);
    let log_det = if min_eig < -tol { None } else { linalg::log_det_spd(&w) };
    DetMaxValue { log_det, w, min_eig }
}

fn tolerance(ops: &BlockOperators, alpha: f64) -> f64 {
    psd_tolerance(&(&ops.control_weight * alpha), &ops.precision)
}

pub fn detmax_objective(sys: &LinearSystem, model: &ControlRiskModel, gains: &[Matrix]) -> Result<DetMaxValue> {
    sys.check_gains(gains)?;
    let ops = build_block_operators(sys, model)?;
    Ok(evaluate(&ops, model.alpha(), gains, tolerance(&ops, model.alpha())))
}

/// `log E[exp(alpha J(K))] = (log det S - log det W) / 2`; `+inf` when infeasible.
pub fn log_expected_exp_cost(sys: &LinearSystem, model: &ControlRiskModel, gains: &[Matrix]) -> Result<f64> {
    let v = detmax_objective(sys, model, gains)?;
    let ops = build_block_operators(sys, model)?;
    let log_det_s = linalg::log_det_spd(&ops.precision).ok_or(Error::NotDefinite { what: "positive definite", min_eig: 0.0 })?;
    Ok(v.log_det.map_or(f64::INFINITY, |l| 0.5 * (log_det_s - l)))
}

/// `log c` with `c = sqrt((2 pi)^{(N-1) m} prod det Sigma_t)`, the Gaussian normalizer.
pub fn log_normalizer(model: &ControlRiskModel) -> f64 {
    let dim: usize = model.noise().iter().map(|s| s.nrows()).sum();
    let log_dets: f64 = model.noise().iter().map(|s| linalg::log_det_spd(s).unwrap_or(f64::NAN)).sum();
    0.5 * (dim as f64 * (2.0 * std::f64::consts::PI).ln() + log_dets)
}

/// Gradient of `log det W` with respect to each `K_t`.
pub fn detmax_gradient(sys: &LinearSystem, model: &ControlRiskModel, gains: &[Matrix]) -> Result<Vec<Matrix>> {
    sys.check_gains(gains)?;
    let ops = build_block_operators(sys, model)?;
    gradient_with(&ops, model.alpha(), gains)
}

fn gradient_with(ops: &BlockOperators, alpha: f64, gains: &[Matrix]) -> Result<Vec<Matrix>> {
    let w = ops.w(alpha, gains);
    let w_inv = linalg::spd_inverse(&w)?;
    let k = ops.place_gains(gains);
    let m = &ops.trajectory;
    let p = &ops.control_weight * alpha - &ops.precision;
    let w_inv_mt = &w_inv * m.transpose();
    let full = (&ops.precision * &w_inv_mt + p * &k * m * &w_inv_mt) * -2.0;
    Ok(ops.diagonal_blocks(&full))
}

/// Which gain entries may be nonzero, plus a convex set over the stacked gains.
#[derive(Debug, Clone)]
pub struct GainStructure {
    pub free: Vec<DMatrix<bool>>,
    pub set: FeasibleSet,
}

impl GainStructure {
    pub fn unconstrained(sys: &LinearSystem) -> Self {
        let free = vec![DMatrix::from_element(sys.control_dim(), sys.state_dim(), true); sys.a.len()];
        Self { free, set: FeasibleSet::All }
    }

    /// Keeps only the entries for which `keep(t, row, col)` holds.
    pub fn masked(sys: &LinearSystem, keep: impl Fn(usize, usize, usize) -> bool) -> Self {
        let free = (0..sys.a.len())
            .map(|t| DMatrix::from_fn(sys.control_dim(), sys.state_dim(), |i, j| keep(t, i, j)))
            .collect();
        Self { free, set: FeasibleSet::All }
    }

    fn apply(&self, gains: &mut [Matrix]) {
        for (k, free) in gains.iter_mut().zip(&self.free) {
            k.zip_apply(free, |v, f| {
                if !f {
                    *v = 0.0
                }
            });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisConfig {
    pub max_iterations: usize,
    pub initial_step: f64,
    /// Stops when the accepted step moves the gains less than this.
    pub tolerance: f64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self { max_iterations: 5000, initial_step: 1.0, tolerance: 1e-12 }
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisReport {
    pub gains: Vec<Matrix>,
    pub log_det: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `log det W` after each accepted step, starting with the initial gains.
    pub trace: Vec<f64>,
    /// Whether `alpha R >= S` (concavity of the program).
    pub certified: bool,
}

fn stacked(gains: &[Matrix]) -> Vector {
    let len = gains.iter().map(|g| g.len()).sum();
    Vector::from_iterator(len, gains.iter().flat_map(|g| g.iter().copied()))
}

fn unstacked(v: &Vector, like: &[Matrix]) -> Vec<Matrix> {
    let mut off = 0;
    like.iter()
        .map(|g| {
            let m = Matrix::from_column_slice(g.nrows(), g.ncols(), &v.as_slice()[off..off + g.len()]);
            off += g.len();
            m
        })
        .collect()
}

/// Projected gradient ascent on `log det W` from `K = 0`, halving the step
/// until the candidate stays feasible and improves.
pub fn synthesize(
    sys: &LinearSystem,
    model: &ControlRiskModel,
    structure: &GainStructure,
    config: &SynthesisConfig,
) -> Result<SynthesisReport> {
    let ops = build_block_operators(sys, model)?;
    let alpha = model.alpha();
    let tol = tolerance(&ops, alpha);
    if structure.free.len() != sys.a.len() {
        return Err(Error::dims("gain mask", sys.a.len(), structure.free.len()));
    }
    let certified = linalg::min_eigenvalue(&(&ops.control_weight * alpha - &ops.precision)) >= -tol;
    let feasible_point = |v: &Vector| -> Result<Vec<Matrix>> {
        let mut g = unstacked(&project(&structure.set, v)?, &sys.zero_gains());
        structure.apply(&mut g);
        Ok(g)
    };
    let mut gains = feasible_point(&Vector::zeros(stacked(&sys.zero_gains()).len()))?;
    let mut value = evaluate(&ops, alpha, &gains, tol)
        .log_det
        .ok_or_else(|| Error::Infeasible("W(K) is not positive definite at the starting gains".into()))?;
    let mut trace = vec![value];
    let mut step = config.initial_step;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let mut grad = gradient_with(&ops, alpha, &gains)?;
        structure.apply(&mut grad);
        let x = stacked(&gains);
        let g = stacked(&grad);
        let mut accepted = None;
        while step > 1e-300 {
            let cand = feasible_point(&(&x + &g * step))?;
            let moved = (stacked(&cand) - &x).norm();
            if moved == 0.0 {
                break;
            }
            if let Some(v) = evaluate(&ops, alpha, &cand, tol).log_det {
                // sufficient increase along the projected direction
                if v >= value + 1e-4 * g.dot(&(stacked(&cand) - &x)) && v >= value {
                    accepted = Some((cand, v, moved));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((cand, v, moved)) => {
                // no change in log det at all: stationary to working precision
                let flat = v == value;
                gains = cand;
                value = v;
                trace.push(v);
                step *= 2.0;
                if flat || moved <= config.tolerance * (1.0 + x.norm()) {
                    converged = true;
                    break;
                }
            }
            None => {
                converged = true;
                break;
            }
        }
    }
    Ok(SynthesisReport { gains, log_det: value, iterations, converged, trace, certified })
}

/// One table per step, rows of `K_t` in order, header `k_0 .. k_{cols-1}`.
pub fn gains_to_tables(gains: &[Matrix]) -> Vec<Table> {
    gains
        .iter()
        .map(|k| {
            let mut t = Table::new((0..k.ncols()).map(|j| format!("k_{j}")));
            for i in 0..k.nrows() {
                t.push(k.row(i).iter().copied().collect());
            }
            t
        })
        .collect()
}

pub fn gains_from_tables(tables: &[Table]) -> Result<Vec<Matrix>> {
    tables
        .iter()
        .enumerate()
        .map(|(t, table)| {
            let cols = table.header.len();
            if let Some((i, _)) = table.rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
                return Err(Error::Parse { line: i + 2, message: format!("gain file for t = {t}: expected {cols} columns") });
            }
            Ok(Matrix::from_fn(table.rows.len(), cols, |i, j| table.rows[i][j]))
        })
        .collect()
}

/// `<dir>/gain_t<t>.csv`.
pub fn gain_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("gain_t{t}.csv"))
}

pub fn save_gains(dir: &Path, gains: &[Matrix]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    gains_to_tables(gains)
        .iter()
        .enumerate()
        .map(|(t, table)| {
            let path = gain_path(dir, t);
            table.save(&path)?;
            Ok(path)
        })
        .collect()
}

/// Reads `gain_t0.csv`, `gain_t1.csv`, ... until the first missing file.
pub fn load_gains(dir: &Path) -> Result<Vec<Matrix>> {
    let mut tables = Vec::new();
    loop {
        let path = gain_path(dir, tables.len());
        if !path.exists() {
            break;
        }
        tables.push(Table::load(&path)?);
    }
    if tables.is_empty() {
        return Err(Error::contract(format!("no gain files found in {}", dir.display())));
    }
    gains_from_tables(&tables)
}
