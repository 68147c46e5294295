use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use riskvex::apps::dataset::sine_regression;
use riskvex::apps::nnet::{evaluate_noisy_net, train_noisy_net, NoisyNetConfig, RegressionLoss};
use riskvex::apps::Dataset;
use riskvex::control::GradientMethod;
use riskvex::sampler::Streams;
use riskvex::synthesis::{load_gains, save_gains};

use crate::common::{gains_dir, require_file, single_row, Global};
use crate::config::Config;
use crate::error::CliError;

pub fn gradient_method(cfg: &mut Config, default: &str) -> Result<GradientMethod, CliError> {
    Ok(match cfg.get_choice("method", &["derivative-free", "model-based"], default)?.as_str() {
        "model-based" => GradientMethod::ModelBased,
        _ => GradientMethod::DerivativeFree,
    })
}

/// Keys: `hidden`, `sigma` (one per layer), `alpha`, `penalty`, `loss`
/// (`squared` or `absolute`), `delta`, `loss_bound`, `linear_output`,
/// `method`, `iterations`, `batch`, `zeta`, `weight_radius`, `init_scale`,
/// `eval_every`.
fn net_config(cfg: &mut Config, force: bool) -> Result<NoisyNetConfig, CliError> {
    let d = NoisyNetConfig::default();
    let loss = cfg.get_choice("loss", &["squared", "absolute"], "squared")?;
    let delta: f64 = cfg.get("delta", 0.01)?;
    Ok(NoisyNetConfig {
        hidden: cfg.get_list("hidden", d.hidden)?,
        loss: if loss == "absolute" { RegressionLoss::Absolute { delta } } else { RegressionLoss::Squared },
        method: gradient_method(cfg, "derivative-free")?,
        sigma: cfg.get_list("sigma", d.sigma)?,
        alpha: cfg.get("alpha", d.alpha)?,
        penalty: cfg.get("penalty", d.penalty)?,
        loss_bound: cfg.get("loss_bound", d.loss_bound)?,
        linear_output: cfg.get("linear_output", d.linear_output)?,
        force,
        iterations: cfg.get("iterations", d.iterations)?,
        batch: cfg.get("batch", d.batch)?,
        zeta: cfg.get_opt("zeta")?,
        weight_radius: cfg.get("weight_radius", d.weight_radius)?,
        init_scale: cfg.get("init_scale", d.init_scale)?,
        eval_every: cfg.get("eval_every", d.eval_every)?,
    })
}

/// `--data` when given, else a generated sine regression (keys `n`,
/// `test_n`, `amplitude`, `frequency`, `noise`), plus the network keys.
pub fn train(global: &Global, mut cfg: Config, data: Option<&Path>, test: Option<&Path>, force: bool) -> Result<(), CliError> {
    let config = net_config(&mut cfg, force)?;
    let mut streams = Streams::new(global.seed);
    let (train_set, test_set) = match data {
        Some(p) => {
            cfg.finish()?;
            (Dataset::load(p)?, test.map(Dataset::load).transpose()?)
        }
        None => {
            let n: usize = cfg.get("n", 200)?;
            let test_n: usize = cfg.get("test_n", 100)?;
            let amplitude: f64 = cfg.get("amplitude", 1.0)?;
            let frequency: f64 = cfg.get("frequency", FRAC_PI_2)?;
            let noise: f64 = cfg.get("noise", 0.0)?;
            cfg.finish()?;
            let mut data_streams = streams.fork();
            let train_set = sine_regression(n, amplitude, frequency, noise, &mut data_streams);
            let test_set = match test {
                Some(p) => Dataset::load(p)?,
                None => sine_regression(test_n, amplitude, frequency, noise, &mut data_streams),
            };
            train_set.save(global.output("train.csv")?)?;
            test_set.save(global.output("test.csv")?)?;
            (train_set, Some(test_set))
        }
    };
    let report = train_noisy_net(&train_set, test_set.as_ref(), &config, &mut streams)?;
    if !report.certified {
        eprintln!("warning: convexity certificate fails, optimality bound is void");
    }
    global.write_table("curve.csv", &report.curve_table())?;
    let dir = gains_dir(global)?;
    save_gains(&dir, &report.policy.gains)?;
    global.say(format!("wrote {}", dir.display()));
    global.say(format!("train mse {}", report.train_mse));
    if let Some(m) = report.test_mse {
        global.say(format!("test mse {m}"));
    }
    Ok(())
}

/// Mean squared error of saved weights on `--data`; takes the network keys.
pub fn eval(global: &Global, mut cfg: Config, data: &Path, weights: &Path) -> Result<(), CliError> {
    let config = net_config(&mut cfg, true)?;
    cfg.finish()?;
    require_file(weights)?;
    let set = Dataset::load(data)?;
    let gains = load_gains(weights)?;
    let mse = evaluate_noisy_net(&gains, &set, &config)?;
    global.write_table("eval.csv", &single_row(&["mse", "examples"], vec![mse, set.len() as f64]))?;
    global.say(format!("mse {mse}"));
    Ok(())
}
