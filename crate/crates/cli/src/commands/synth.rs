use std::path::Path;

use riskvex::control::estimate_log_exp_cost;
use riskvex::sampler::Streams;
use riskvex::synthesis::{log_expected_exp_cost, load_gains, save_gains, synthesize, GainStructure, SynthesisConfig};
use riskvex::table::Table;
use riskvex::Error;

use crate::common::{gains_dir, linear_setup, require_file, single_row, Global};
use crate::config::Config;
use crate::error::CliError;

/// Linear-system keys plus `structure` (`full` or `diagonal`),
/// `max_iterations`, `initial_step`, `tolerance`.
pub fn solve(global: &Global, mut cfg: Config, force: bool) -> Result<(), CliError> {
    let setup = linear_setup(&mut cfg)?;
    let structure = cfg.get_choice("structure", &["full", "diagonal"], "full")?;
    let d = SynthesisConfig::default();
    let config = SynthesisConfig {
        max_iterations: cfg.get("max_iterations", d.max_iterations)?,
        initial_step: cfg.get("initial_step", d.initial_step)?,
        tolerance: cfg.get("tolerance", d.tolerance)?,
    };
    cfg.finish()?;
    let sys = &setup.system;
    let structure = match structure.as_str() {
        "diagonal" => GainStructure::masked(sys, |_, i, j| i == j),
        _ => GainStructure::unconstrained(sys),
    };
    let report = synthesize(sys, &setup.model, &structure, &config)?;
    if !report.certified {
        if !force {
            // the certificate does not depend on the gains, so report it from the block operators
            let cert = sys.control_problem(&setup.model)?.certificate().worst();
            return Err(Error::Uncertified { margin: cert.margin, tolerance: cert.tolerance }.into());
        }
        eprintln!("warning: convexity certificate fails, the log-det objective may not be concave");
    }
    let mut trace = Table::new(["iter", "log_det"]);
    for (i, v) in report.trace.iter().enumerate() {
        trace.push(vec![i as f64, *v]);
    }
    global.write_table("trace.csv", &trace)?;
    let dir = gains_dir(global)?;
    save_gains(&dir, &report.gains)?;
    global.say(format!("wrote {}", dir.display()));
    let value = log_expected_exp_cost(sys, &setup.model, &report.gains)?;
    global.say(format!("iterations {} converged {} log det {}", report.iterations, report.converged, report.log_det));
    global.say(format!("log E[exp(alpha cost)] {value}"));
    Ok(())
}

/// Closed-form and Monte Carlo risk-averse cost of `--gains` on the
/// linear system given by the usual keys.
pub fn eval(global: &Global, mut cfg: Config, gains: &Path) -> Result<(), CliError> {
    let setup = linear_setup(&mut cfg)?;
    cfg.finish()?;
    require_file(gains)?;
    let k = load_gains(gains)?;
    let closed = log_expected_exp_cost(&setup.system, &setup.model, &k)?;
    let problem = setup.system.control_problem(&setup.model)?;
    let policy = setup.system.policy(&k);
    problem.check_policy(&policy)?;
    let n = global.samples_or(100_000);
    let est = estimate_log_exp_cost(&problem, &policy, n, &mut Streams::new(global.seed))?;
    global.write_table(
        "eval.csv",
        &single_row(&["log_exp_cost_closed_form", "log_exp_cost_monte_carlo", "std_err", "samples"], vec![closed, est.value, est.std_err, n as f64]),
    )?;
    global.say(format!("closed form {closed} monte carlo {} +- {}", est.value, est.std_err));
    Ok(())
}
