//! Trains the default noisy network on the half-period sine target for a range
//! of seeds and prints the final train MSE relative to the target variance.
//!
//! Usage: `noisy_net_pilot [seeds] [iterations] [radius] [alpha] [sigma_hidden] [sigma_output] [loss_bound]`

use riskvex::apps::dataset::sine_regression;
use riskvex::apps::nnet::{train_noisy_net, NoisyNetConfig};
use riskvex::sampler::Streams;

fn main() -> riskvex::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("arguments are numbers")).collect();
    let seeds = args.first().map_or(20, |&v| v as u64);
    let mut config = NoisyNetConfig::default();
    if let Some(&v) = args.get(1) {
        config.iterations = v as usize;
    }
    if let Some(&v) = args.get(2) {
        config.weight_radius = v;
    }
    if let Some(&v) = args.get(3) {
        config.alpha = v;
    }
    if let (Some(&h), Some(&o)) = (args.get(4), args.get(5)) {
        config.sigma = vec![h, o];
    }
    if let Some(&v) = args.get(6) {
        config.loss_bound = v;
    }
    let mut ratios = Vec::new();
    for seed in 0..seeds {
        let data = sine_regression(200, 1.0, std::f64::consts::FRAC_PI_2, 0.0, &mut Streams::new(1000 + seed));
        let mean = data.labels.mean();
        let variance = data.labels.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / data.len() as f64;
        let report = train_noisy_net(&data, None, &config, &mut Streams::new(seed))?;
        let ratio = report.train_mse / variance;
        println!("seed {seed}: mse/var = {ratio:.4}, zeta = {:.3e}", report.solver.zeta);
        ratios.push(ratio);
    }
    ratios.sort_by(f64::total_cmp);
    let n = ratios.len();
    if n > 0 {
        let median = if n % 2 == 1 { ratios[n / 2] } else { 0.5 * (ratios[n / 2 - 1] + ratios[n / 2]) };
        println!("median mse/var = {median:.4}");
    }
    Ok(())
}
