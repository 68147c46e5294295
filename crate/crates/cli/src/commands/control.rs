use std::path::Path;
use std::sync::Arc;

use riskvex::control::{
    estimate_log_exp_cost, rollout, train_policy, AffineFeatures, ControlProblem, Features, Policy, RolloutMode,
    StateFeatures,
};
use riskvex::sampler::Streams;
use riskvex::solver::{FeasibleSet, SolverConfig, Zeta};
use riskvex::synthesis::{load_gains, save_gains};
use riskvex::{Error, Vector};

use crate::common::{gains_dir, linear_setup, require_file, single_row, Global};
use crate::config::Config;
use crate::error::CliError;

use super::nnet::gradient_method;

fn features(cfg: &mut Config) -> Result<Arc<dyn Features>, CliError> {
    Ok(match cfg.get_choice("features", &["state", "affine"], "state")?.as_str() {
        "affine" => Arc::new(AffineFeatures),
        _ => Arc::new(StateFeatures),
    })
}

fn write_estimate(global: &Global, problem: &ControlProblem, policy: &Policy, streams: &mut Streams) -> Result<(), CliError> {
    let n = global.samples_or(10_000);
    let est = estimate_log_exp_cost(problem, policy, n, streams)?;
    global.write_table("estimate.csv", &single_row(&["log_exp_cost", "std_err", "samples"], vec![est.value, est.std_err, n as f64]))?;
    global.say(format!("log E[exp(alpha cost)] {} +- {}", est.value, est.std_err));
    Ok(())
}

/// Linear-system keys plus `features`, `method`, `iterations`, `batch`,
/// `radius`, `zeta`, `averaging`.
pub fn train(global: &Global, mut cfg: Config, force: bool) -> Result<(), CliError> {
    let setup = linear_setup(&mut cfg)?;
    let features = features(&mut cfg)?;
    let method = gradient_method(&mut cfg, "model-based")?;
    let iterations: usize = cfg.get("iterations", 2000)?;
    let batch: usize = cfg.get("batch", 16)?;
    let radius: f64 = cfg.get("radius", 2.0)?;
    let zeta = cfg.get_opt::<f64>("zeta")?.map_or(Zeta::Pilot, Zeta::Fixed);
    let averaging: bool = cfg.get("averaging", true)?;
    cfg.finish()?;

    let problem = setup.system.control_problem(&setup.model)?;
    let cert = problem.certificate().worst();
    global.say(format!("certificate margin {} (tolerance {})", cert.margin, cert.tolerance));
    if !cert.holds {
        if !force {
            return Err(Error::Uncertified { margin: cert.margin, tolerance: cert.tolerance }.into());
        }
        eprintln!("warning: convexity certificate fails, optimality bound is void");
    }
    let initial = Policy::zeros(problem.dynamics.as_ref(), features);
    let config = SolverConfig { iterations, zeta, batch, averaging, radius: None };
    let constraint = FeasibleSet::ball(Vector::zeros(initial.num_params()), radius);
    let mut streams = Streams::new(global.seed);
    let trained = train_policy(&problem, &initial, method, &config, &constraint, &mut streams)?;
    global.write_table("trace.csv", &trained.trace_table())?;
    let dir = gains_dir(global)?;
    save_gains(&dir, &trained.policy.gains)?;
    global.say(format!("wrote {}", dir.display()));
    global.say(format!("zeta {} convergence certificate {}", trained.report.zeta, trained.report.certificate));
    write_estimate(global, &problem, &trained.policy, &mut streams)
}

/// One trajectory under `--gains` (zero gains when absent) and a Monte Carlo
/// estimate of the risk-averse cost. Linear-system keys plus `features`, `mode`.
pub fn run_rollout(global: &Global, mut cfg: Config, gains: Option<&Path>) -> Result<(), CliError> {
    let setup = linear_setup(&mut cfg)?;
    let features = features(&mut cfg)?;
    let mode = match cfg.get_choice("mode", &["noisy", "mean"], "noisy")?.as_str() {
        "mean" => RolloutMode::Mean,
        _ => RolloutMode::Noisy,
    };
    cfg.finish()?;
    let problem = setup.system.control_problem(&setup.model)?;
    let policy = match gains {
        Some(dir) => {
            require_file(dir)?;
            Policy::new(load_gains(dir)?, features)
        }
        None => Policy::zeros(problem.dynamics.as_ref(), features),
    };
    problem.check_policy(&policy)?;
    let mut streams = Streams::new(global.seed);
    let mut rng = streams.next_key().rng(0);
    let path = rollout(&problem, &policy, &mut rng, mode)?;
    global.write_table("rollout.csv", &path.to_table())?;
    global.say(format!("trajectory cost {}", path.cost));
    write_estimate(global, &problem, &policy, &mut streams)
}
