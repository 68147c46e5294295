use std::path::Path;

use riskvex::apps::classify::{accuracy, classifier_objective, corrupt_labels, train_classifier, ClassifierConfig};
use riskvex::apps::dataset::gaussian_blobs;
use riskvex::apps::Dataset;
use riskvex::sampler::Streams;
use riskvex::table::Table;
use riskvex::Vector;

use crate::common::{single_row, Global};
use crate::config::Config;
use crate::error::CliError;

struct Blobs {
    n: usize,
    separation: f64,
    spread: f64,
}

fn blob_keys(cfg: &mut Config) -> Result<Blobs, CliError> {
    Ok(Blobs { n: cfg.get("n", 500)?, separation: cfg.get("separation", 4.0)?, spread: cfg.get("spread", 1.0)? })
}

fn with_bias(data: Dataset, bias: bool) -> Dataset {
    if bias {
        data.with_bias()
    } else {
        data
    }
}

/// `--data` when given, else generated blobs (keys `n`, `separation`,
/// `spread`, `test_n`); the generated split is written next to the results.
/// Keys: `sigma`, `scale`, `max_iterations`, `initial_step`, `max_step`,
/// `min_step`, `grad_tol`, `bias`.
pub fn train(global: &Global, mut cfg: Config, data: Option<&Path>, test: Option<&Path>) -> Result<(), CliError> {
    let d = ClassifierConfig::default();
    let config = ClassifierConfig {
        sigma: cfg.get("sigma", d.sigma)?,
        scale: cfg.get("scale", d.scale)?,
        max_iterations: cfg.get("max_iterations", d.max_iterations)?,
        initial_step: cfg.get("initial_step", d.initial_step)?,
        max_step: cfg.get("max_step", d.max_step)?,
        min_step: cfg.get("min_step", d.min_step)?,
        grad_tol: cfg.get("grad_tol", d.grad_tol)?,
    };
    let bias: bool = cfg.get("bias", false)?;
    let (train_set, test_set) = match data {
        Some(p) => {
            cfg.finish()?;
            (Dataset::load(p)?, test.map(Dataset::load).transpose()?)
        }
        None => {
            let blobs = blob_keys(&mut cfg)?;
            let test_n: usize = cfg.get("test_n", 500)?;
            cfg.finish()?;
            let mut streams = Streams::new(global.seed);
            let train_set = gaussian_blobs(blobs.n, blobs.separation, blobs.spread, &mut streams);
            let test_set = match test {
                Some(p) => Dataset::load(p)?,
                None => gaussian_blobs(test_n, blobs.separation, blobs.spread, &mut streams),
            };
            train_set.save(global.output("train.csv")?)?;
            test_set.save(global.output("test.csv")?)?;
            (train_set, Some(test_set))
        }
    };
    let train_set = with_bias(train_set, bias);
    let report = train_classifier(&train_set, &config)?;
    let header: Vec<String> = (0..report.theta.len()).map(|i| format!("theta_{i}")).collect();
    let mut weights = Table::new(header);
    weights.push(report.theta.iter().copied().collect());
    global.write_table("weights.csv", &weights)?;
    global.write_table("trace.csv", &report.trace_table())?;
    global.say(format!("iterations {} objective {}", report.iterations, report.objective));
    global.say(format!("train accuracy {}", report.train_accuracy));
    if let Some(t) = test_set {
        let t = with_bias(t, bias);
        t.check_binary()?;
        global.say(format!("test accuracy {}", accuracy(&report.theta, &t)));
    }
    Ok(())
}

/// Keys: `sigma`, `scale`, `bias`.
pub fn eval(global: &Global, mut cfg: Config, data: &Path, weights: &Path) -> Result<(), CliError> {
    let sigma: f64 = cfg.get("sigma", 1.0)?;
    let scale: f64 = cfg.get("scale", 1.0)?;
    let bias: bool = cfg.get("bias", false)?;
    cfg.finish()?;
    let set = with_bias(Dataset::load(data)?, bias);
    set.check_binary()?;
    let table = Table::load(weights)?;
    let row = table.rows.first().ok_or_else(|| CliError::Input(format!("{}: no weight row", weights.display())))?;
    if row.len() != set.dim() {
        return Err(CliError::Input(format!("weights have {} entries but the data has {} features", row.len(), set.dim())));
    }
    let theta = Vector::from_column_slice(row);
    let acc = accuracy(&theta, &set);
    let (objective, _) = classifier_objective(&theta, &set, sigma, scale);
    global.write_table("eval.csv", &single_row(&["accuracy", "objective", "examples"], vec![acc, objective, set.len() as f64]))?;
    global.say(format!("accuracy {acc} objective {objective}"));
    Ok(())
}

/// Corrupts `--data` or generated blobs. Keys: `sigma_noise`, plus the blob
/// keys when generating.
pub fn corrupt(global: &Global, mut cfg: Config, data: Option<&Path>) -> Result<(), CliError> {
    let sigma_noise: f64 = cfg.get("sigma_noise", 1.0)?;
    let mut streams = Streams::new(global.seed);
    let clean = match data {
        Some(p) => {
            cfg.finish()?;
            Dataset::load(p)?
        }
        None => {
            let blobs = blob_keys(&mut cfg)?;
            cfg.finish()?;
            gaussian_blobs(blobs.n, blobs.separation, blobs.spread, &mut streams)
        }
    };
    let noisy = corrupt_labels(&clean, sigma_noise, &mut streams)?;
    let path = global.output("corrupted.csv")?;
    noisy.save(&path)?;
    global.say(format!("wrote {}", path.display()));
    let flipped = clean.labels.iter().zip(noisy.labels.iter()).filter(|(a, b)| a != b).count();
    global.say(format!("flipped {flipped} of {}", clean.len()));
    Ok(())
}
