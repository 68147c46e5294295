use riskvex::apps::demo::{demo_1d, demo_field, DemoConfig};

use crate::common::Global;
use crate::config::Config;
use crate::error::CliError;

/// Keys: `alpha`, `sigma`, `kappa`, `points`, `lower`, `upper`.
pub fn run(global: &Global, mut cfg: Config) -> Result<(), CliError> {
    let d = DemoConfig::default();
    let config = DemoConfig {
        alpha: cfg.get("alpha", d.alpha)?,
        sigma: cfg.get("sigma", d.sigma)?,
        kappa: cfg.get("kappa", d.kappa)?,
        points: cfg.get("points", d.points)?,
        lower: cfg.get("lower", d.lower)?,
        upper: cfg.get("upper", d.upper)?,
        samples: global.samples_or(d.samples),
    };
    cfg.finish()?;
    let curve = demo_1d(&demo_field(), &config, global.seed)?;
    global.write_table("demo_1d.csv", &curve.to_table())?;
    global.say(format!("convexified argmin {}", curve.argmin_convexified()));
    Ok(())
}
