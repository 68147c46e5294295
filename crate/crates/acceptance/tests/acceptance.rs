//! Every acceptance criterion at its stated tolerance and time budget, one
//! verdict line each. Exits non-zero when any criterion fails.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, SQRT_2};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use riskvex::apps::classify::{accuracy, corrupt_labels, erfc_loss, train_classifier, ClassifierConfig};
use riskvex::apps::dataset::{gaussian_blobs, sine_regression};
use riskvex::apps::demo::{demo_1d, demo_field, DemoConfig, NARROW_BASIN, ROBUST_BASIN};
use riskvex::apps::nnet::{train_noisy_net, NoisyNetConfig};
use riskvex::apps::Dataset;
use riskvex::control::{
    estimate_log_exp_cost, estimate_policy_gradient, policy_gradient_model_based, train_policy, AffineFeatures,
    ControlRiskModel, Features, GradientMethod, Policy, RolloutMode, RolloutNoise, StateFeatures,
};
use riskvex::objective::{
    check_convexity_certificate, exp_objective, fold_samples, log_exp_objective, mean_grad_estimate, RiskModel,
    ScalarField,
};
use riskvex::sampler::{GaussianSampler, Streams};
use riskvex::sensitivity::{estimate_sensitivity, lipschitz_gap_bound};
use riskvex::solver::{solve, variance_bound, FeasibleSet, SolverConfig, VarianceBoundInputs, Zeta};
use riskvex::stats::MeanAcc;
use riskvex::synthesis::{log_expected_exp_cost, synthesize, GainStructure, LinearSystem, SynthesisConfig};
use riskvex::table::Table;
use riskvex::{Matrix, Vector};
use riskvex_verify::{
    frozen_noise_gradient, grid_argmin, normal_matrix, random_smooth_problem, random_spd, run_criterion, uniform,
    Outcome, SineSum, SmoothScales,
};
use statrs::distribution::{ContinuousCDF, Normal};
use tempfile::TempDir;

const MILLION: usize = 1_000_000;

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

fn certificate_examples() -> Outcome {
    let cases = [
        (1.0, Matrix::identity(2, 2), Matrix::identity(2, 2), 0.0, true),
        (2.0, Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 0.25])), Matrix::identity(2, 2), -2.0, false),
        (4.0, Matrix::identity(2, 2), Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 2.0])), 3.0, true),
    ];
    let mut margins = Vec::new();
    let mut ok = true;
    for (alpha, sigma, reg, margin, holds) in cases {
        let c = check_convexity_certificate(&RiskModel::new(alpha, sigma, reg).unwrap());
        ok &= c.holds == holds && c.margin == margin;
        margins.push(c.margin);
    }
    Outcome::new(ok, format!("margins {margins:?}, expected [0, -2, 3] exactly"))
}

fn gaussian_oracle() -> Outcome {
    let mut rng = Streams::new(2002).next_key().rng(0);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for i in 0..50 {
        let k = 1 + i % 3;
        let alpha = uniform(&mut rng, 0.5, 2.0);
        let sigma = random_spd(&mut rng, k, 0.05, 0.5);
        let reg = sigma.clone().try_inverse().unwrap() * (uniform(&mut rng, 1.0, 2.0) / alpha);
        let direction = normal_matrix(&mut rng, k, 1).column(0).into_owned();
        // keep the lognormal spread alpha sqrt(a' Sigma a) in [0.2, 1] so 10^6 draws resolve the mean
        let spread = uniform(&mut rng, 0.2, 1.0);
        let a = &direction * (spread / (alpha * direction.dot(&(&sigma * &direction)).sqrt()));
        let theta = normal_matrix(&mut rng, k, 1).column(0).into_owned();
        let model = RiskModel::new(alpha, sigma.clone(), reg.clone()).unwrap();
        let exact = a.dot(&theta) + alpha / 2.0 * a.dot(&(&sigma * &a)) + 0.5 * theta.dot(&(&reg * &theta));
        let mut sampler = model.sampler(10_000 + i as u64).unwrap();
        let est = log_exp_objective(&ScalarField::linear(a), &model, &theta, MILLION, &mut sampler).unwrap();
        let z = (est.value - exact).abs() / est.std_err;
        worst = worst.max(z);
        failures += usize::from(z > 3.0);
    }
    Outcome::new(failures == 0, format!("50 linear fields, worst |error| = {worst:.2} std_err (limit 3), {failures} outside"))
}

fn random_certified_model(rng: &mut rand_chacha::ChaCha8Rng, k: usize) -> RiskModel {
    let alpha = uniform(rng, 0.5, 2.0);
    let sigma = random_spd(rng, k, 0.1, 1.0);
    let reg = sigma.clone().try_inverse().unwrap() * (uniform(rng, 1.0, 1.5) / alpha);
    RiskModel::new(alpha, sigma, reg).unwrap()
}

fn midpoint_convexity() -> Outcome {
    let mut rng = Streams::new(3003).next_key().rng(0);
    let n = 100_000;
    let mut holds = 0;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..100 {
        let k = 1 + i % 3;
        let amplitude = uniform(&mut rng, 0.5, 1.5);
        let field = SineSum::random(&mut rng, k, 4, amplitude, 3.0).field();
        let model = random_certified_model(&mut rng, k);
        assert!(check_convexity_certificate(&model).holds);
        let a = normal_matrix(&mut rng, k, 1).column(0).into_owned();
        let b = normal_matrix(&mut rng, k, 1).column(0).into_owned();
        let mid = (&a + &b) * 0.5;
        // common random numbers: every evaluation replays the same draws
        let base = model.sampler(20_000 + i as u64).unwrap();
        let g = |t: &Vector| exp_objective(&field, &model, t, n, &mut base.clone()).unwrap();
        let (ga, gb, gm) = (g(&a), g(&b), g(&mid));
        let se = (gm.std_err.powi(2) + (ga.std_err.powi(2) + gb.std_err.powi(2)) / 4.0).sqrt();
        let excess = (gm.value - (ga.value + gb.value) / 2.0) / se;
        worst = worst.max(excess);
        holds += usize::from(excess <= 3.0);
    }
    Outcome::new(holds >= 99, format!("midpoint inequality within 3 std_err in {holds}/100 (need 99), worst excess {worst:.2} std_err"))
}

fn gradient_unbiasedness() -> Outcome {
    let mut rng = Streams::new(4004).next_key().rng(0);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    let mut coords = 0;
    for i in 0..20 {
        let k = 1 + i % 3;
        let amplitude = uniform(&mut rng, 0.5, 1.0);
        let sine = SineSum::random(&mut rng, k, 3, amplitude, 2.0);
        let field = sine.field();
        let model = random_certified_model(&mut rng, k);
        let theta = normal_matrix(&mut rng, k, 1).column(0).into_owned() * 0.5;
        let mut grad_sampler = model.sampler(30_000 + i as u64).unwrap();
        let grad = mean_grad_estimate(&field, &model, &theta, 100_000, &mut grad_sampler).unwrap();

        // oracle: central differences of G from field values only, common draws across +-h
        let h = 1e-4;
        let alpha = model.alpha();
        let g_at = |t: &Vector, omega: &Vector| (alpha * (sine.value(&(t + omega)) + model.quadratic(t))).exp();
        let mut fd_sampler = GaussianSampler::new(40_000 + i as u64, model.sigma()).unwrap();
        let blocks = fold_samples(&mut fd_sampler, MILLION, |acc: &mut Vec<MeanAcc>, _, omega| {
            if acc.is_empty() {
                acc.resize(k, MeanAcc::default());
            }
            for (j, a) in acc.iter_mut().enumerate() {
                let mut e = Vector::zeros(k);
                e[j] = h;
                a.push((g_at(&(&theta + &e), omega) - g_at(&(&theta - &e), omega)) / (2.0 * h));
            }
            Ok(())
        })
        .unwrap();
        let mut fd = vec![MeanAcc::default(); k];
        for b in &blocks {
            for (t, s) in fd.iter_mut().zip(b) {
                t.merge(s);
            }
        }
        for (j, oracle) in fd.iter().enumerate() {
            let se = grad.std_err[j].hypot(oracle.std_err());
            let z = (grad.mean[j] - oracle.mean()).abs() / se;
            worst = worst.max(z);
            failures += usize::from(z > 3.0);
            coords += 1;
        }
    }
    Outcome::new(
        failures == 0,
        format!("20 problems, {coords} coordinates, worst |mean - finite difference| = {worst:.2} combined std_err (limit 3), {failures} outside"),
    )
}

fn sensitivity_bound() -> Outcome {
    let a = Vector::from_vec(vec![0.6, 0.8]);
    let theta = Vector::from_vec(vec![0.3, -0.2]);
    let fields: [(&str, ScalarField); 3] = [
        ("linear", ScalarField::linear(a.clone())),
        ("norm", ScalarField::new(2, f64::INFINITY, |x| x.norm()).with_lipschitz(1.0)),
        ("sine", {
            let a = a.clone();
            ScalarField::new(2, 1.0, move |x| a.dot(x).sin()).with_lipschitz(1.0)
        }),
    ];
    let mut cells = 0;
    let mut violations = Vec::new();
    let mut tight = Vec::new();
    let mut tight_ok = true;
    let mut seed = 50_000;
    for sigma in [0.1, 0.5, 1.0, 2.0] {
        for alpha in [0.5, 1.0, 4.0] {
            let model = RiskModel::isotropic(alpha, sigma, 1.0 / (alpha * sigma * sigma), 2).unwrap();
            let bound = lipschitz_gap_bound(1.0, &model).unwrap().gap_bound;
            for (name, f) in &fields {
                seed += 1;
                let s = estimate_sensitivity(f, &model, &theta, MILLION, &mut model.sampler(seed).unwrap()).unwrap();
                cells += 1;
                if s.value > bound + 3.0 * s.std_err {
                    violations.push(format!("{name} sigma={sigma} alpha={alpha}: {} > {bound}", s.value));
                }
                // tightness where 10^6 draws resolve it: the mean pass costs sigma/1000 and
                // the exponential moment needs a lognormal spread alpha sigma of at most 1
                let spread = alpha * sigma;
                if *name == "linear" && (0.3..=1.0).contains(&spread) {
                    let rel = (s.value - bound).abs() / bound;
                    tight_ok &= rel <= 0.02;
                    tight.push(format!("{:.2}%", 100.0 * rel));
                }
            }
        }
    }
    Outcome::new(
        violations.is_empty() && tight_ok,
        format!(
            "{cells} cells, {} above the Lipschitz bound {violations:?}; linear-field relative gap {} (limit 2%)",
            violations.len(),
            tight.join(", ")
        ),
    )
}

fn solver_certificate() -> Outcome {
    let field = ScalarField::constant(2, 0.0);
    let model = RiskModel::new(1.0, Matrix::identity(2, 2), Matrix::identity(2, 2)).unwrap();
    let set = FeasibleSet::unit_ball(2);
    let mut summary = Vec::new();
    let mut ok = true;
    let mut max_norm: f64 = 0.0;
    for t in [100, 1000, 10_000] {
        let mut within = 0;
        for seed in 0..20 {
            let config = SolverConfig::new(t, Zeta::Pilot);
            let report = solve(&field, &model, &set, &config, &mut model.sampler(60_000 + seed).unwrap()).unwrap();
            let gap = (0.5 * report.theta_hat.norm_squared()).exp() - 1.0;
            let bound = 1.0 * report.empirical_zeta() * (1.0 / (2.0 * t as f64)).sqrt();
            max_norm = max_norm.max(report.theta_hat.norm());
            within += usize::from(gap <= bound);
        }
        ok &= within >= 18;
        summary.push(format!("T={t}: {within}/20"));
    }
    // the start theta = 0 is the exact minimizer and every sampled gradient there is 0
    Outcome::new(ok, format!("{} (need 18/20); largest |theta_hat| {max_norm:e}", summary.join(", ")))
}

fn variance_bound_example() -> Outcome {
    let z = variance_bound(&VarianceBoundInputs { alpha: 1.0, kappa: 1.0, sigma: 1.0, beta: 0.5, gamma_sq: 1.0, mbar: 0.0, radius: 1.0 })
        .unwrap();
    let expected = 4.0 * 2f64.exp();
    let rel = (z - expected).abs() / expected;
    Outcome::new(rel <= 1e-9, format!("zeta = {z} vs 4e^2 = {expected}, relative error {rel:e} (limit 1e-9)"))
}

fn features_for(i: usize) -> Arc<dyn Features> {
    if i.is_multiple_of(2) {
        Arc::new(StateFeatures)
    } else {
        Arc::new(AffineFeatures)
    }
}

fn pathwise_gradient() -> Outcome {
    let mut rng = Streams::new(8008).next_key().rng(0);
    let scales = SmoothScales { alpha: 0.5, gain: 0.5, state_cost: 0.5, noise: (0.2, 1.0), disturbance: 0.5 };
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let (problem, policy) = random_smooth_problem(&mut rng, scales, features_for(i));
        let noise = RolloutNoise::sample(&problem, &mut rng, RolloutMode::Noisy);
        let sample = policy_gradient_model_based(&problem, &policy, &noise).unwrap();
        let adjoint = Policy::new(sample.gradient(), policy.features.clone()).stacked();
        let fd = frozen_noise_gradient(&problem, &policy, &noise, 1e-5);
        worst = worst.max((adjoint - &fd).norm() / fd.norm());
    }
    Outcome::new(worst <= 1e-5, format!("50 systems, worst relative error {worst:e} (limit 1e-5)"))
}

fn estimator_agreement() -> Outcome {
    let mut rng = Streams::new(9009).next_key().rng(0);
    let scales = SmoothScales { alpha: 0.3, gain: 0.3, state_cost: 0.1, noise: (0.3, 1.0), disturbance: 0.3 };
    let n = 100_000;
    let mut worst: f64 = 0.0;
    let mut apart = 0;
    let mut coords = 0;
    for i in 0..10 {
        let (problem, policy) = random_smooth_problem(&mut rng, scales, features_for(i));
        let mb = estimate_policy_gradient(&problem, &policy, GradientMethod::ModelBased, n, &mut Streams::new(90_000 + i as u64)).unwrap();
        let df = estimate_policy_gradient(&problem, &policy, GradientMethod::DerivativeFree, n, &mut Streams::new(95_000 + i as u64)).unwrap();
        let (m1, s1, m2, s2) = (mb.stacked_mean(), mb.stacked_std_err(), df.stacked_mean(), df.stacked_std_err());
        for j in 0..m1.len() {
            // the two 3-sigma intervals overlap
            let ratio = (m1[j] - m2[j]).abs() / (3.0 * (s1[j] + s2[j]));
            worst = worst.max(ratio);
            apart += usize::from(ratio > 1.0);
            coords += 1;
        }
    }
    Outcome::new(apart == 0, format!("10 systems, {coords} coordinates, {apart} with disjoint 3-sigma intervals; worst gap/(3 se1 + 3 se2) = {worst:.2}"))
}

/// `s' = s + y`, three states from `s_0 = 0`, `l = q s^2 / 2`, `R = r`; only the
/// second gain acts.
struct LeqgBenchmark {
    system: LinearSystem,
    model: ControlRiskModel,
}

impl LeqgBenchmark {
    const Q: f64 = 0.2;
    const R: f64 = 1.0;
    const ALPHA: f64 = 1.0;
    const SIGMA: f64 = 1.0;

    fn new() -> Self {
        let system = LinearSystem::scalar(3, 1.0, 1.0, Self::Q, Self::R).unwrap();
        let model = ControlRiskModel::isotropic(Self::ALPHA, Self::SIGMA, &[1, 1]).unwrap();
        Self { system, model }
    }

    fn gains(k: f64) -> Vec<Matrix> {
        vec![Matrix::zeros(1, 1), Matrix::from_element(1, 1, k)]
    }
}

fn leqg_triangle() -> Outcome {
    let bench = LeqgBenchmark::new();
    let problem = bench.system.control_problem(&bench.model).unwrap();
    if !problem.certificate().holds {
        return Outcome::new(false, "benchmark model is not certified");
    }

    // (c) dense grid over K in [-2, 0] at 1e-3 of the 10^6-rollout objective, common draws
    let (grid, evaluations) = grid_argmin(-2.0, 0.0, 1e-3, |k| {
        let policy = bench.system.policy(&LeqgBenchmark::gains(k));
        estimate_log_exp_cost(&problem, &policy, MILLION, &mut Streams::new(10_010)).unwrap().value
    });

    // (b) det-max synthesis
    let synth = synthesize(&bench.system, &bench.model, &GainStructure::unconstrained(&bench.system), &SynthesisConfig::default()).unwrap();
    let synthesized = synth.gains[1][(0, 0)];

    // (a) derivative-free projected SGD over both gains in the box [-2, 0]^2
    let initial = bench.system.policy(&bench.system.zero_gains());
    let config = SolverConfig { iterations: 20_000, zeta: Zeta::Pilot, batch: 8, averaging: true, radius: None };
    let set = FeasibleSet::boxed(Vector::from_element(2, -2.0), Vector::zeros(2));
    let trained = train_policy(&problem, &initial, GradientMethod::DerivativeFree, &config, &set, &mut Streams::new(10_011)).unwrap();
    let learned = trained.policy.gains[1][(0, 0)];

    let close = |x: f64, y: f64| (x - y).abs() <= 0.05 * x.abs().max(y.abs());
    let pairs = [close(learned, synthesized), close(learned, grid), close(synthesized, grid)];
    Outcome::new(
        pairs.iter().all(|&p| p),
        format!("gain: trained {learned:.4}, synthesized {synthesized:.6}, grid {grid:.3} ({evaluations} grid evaluations); pairwise within 5%: {pairs:?}"),
    )
}

fn random_linear_instance(rng: &mut rand_chacha::ChaCha8Rng) -> (LinearSystem, ControlRiskModel, Vec<Matrix>) {
    let n = 1 + usize::from(uniform(rng, 0.0, 1.0) < 0.5);
    let m = 1 + usize::from(uniform(rng, 0.0, 1.0) < 0.5);
    let horizon = 2 + (uniform(rng, 0.0, 3.0) as usize);
    let k = horizon - 1;
    let alpha = uniform(rng, 0.3, 1.0);
    let a = (0..k).map(|_| normal_matrix(rng, n, n) * 0.6).collect();
    let b = (0..k).map(|_| normal_matrix(rng, n, m) * 0.6).collect();
    let q = (0..horizon).map(|_| random_spd(rng, n, 0.0, 0.3)).collect();
    let noise: Vec<Matrix> = (0..k).map(|_| random_spd(rng, m, 0.3, 1.0)).collect();
    let r = noise.iter().map(|s| s.clone().try_inverse().unwrap() * (uniform(rng, 1.0, 1.5) / alpha)).collect();
    let system = LinearSystem::new(a, b, q, r).unwrap();
    let model = ControlRiskModel::new(alpha, noise).unwrap();
    let gains = (0..k).map(|_| normal_matrix(rng, m, n) * 0.4).collect();
    (system, model, gains)
}

fn detmax_cross_check() -> Outcome {
    let mut rng = Streams::new(11_011).next_key().rng(0);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    let mut accepted = 0;
    let mut drawn = 0;
    while accepted < 10 {
        drawn += 1;
        let (system, model, gains) = random_linear_instance(&mut rng);
        // feasible at 4 alpha: exp(alpha J) then has a finite fourth moment, so the
        // sample std_err is itself a consistent estimate and the 3-sigma test is calibrated
        let quadrupled = model.with_alpha(4.0 * model.alpha()).unwrap();
        let closed = log_expected_exp_cost(&system, &model, &gains).unwrap();
        if !closed.is_finite() || !log_expected_exp_cost(&system, &quadrupled, &gains).unwrap().is_finite() {
            continue;
        }
        let problem = system.control_problem(&model).unwrap();
        let est = estimate_log_exp_cost(&problem, &system.policy(&gains), MILLION, &mut Streams::new(110_000 + accepted)).unwrap();
        let z = (est.value - closed).abs() / est.std_err;
        worst = worst.max(z);
        failures += usize::from(z > 3.0);
        accepted += 1;
    }
    Outcome::new(failures == 0, format!("10 instances ({drawn} drawn), worst |closed form - Monte Carlo| = {worst:.2} std_err (limit 3)"))
}

fn demo_analogue() -> Outcome {
    let config = DemoConfig { alpha: 4.0, sigma: 0.5, kappa: 1.0, samples: MILLION, ..DemoConfig::default() };
    let curve = demo_1d(&demo_field(), &config, 12_012).unwrap();
    let v = &curve.convexified;
    let se = &curve.convexified_std_err;
    let mut worst = f64::INFINITY;
    let mut convex = true;
    for i in 1..v.len() - 1 {
        let d2 = v[i - 1] - 2.0 * v[i] + v[i + 1];
        let slack = 3.0 * (se[i - 1].powi(2) + 4.0 * se[i].powi(2) + se[i + 1].powi(2)).sqrt();
        convex &= d2 >= -slack;
        worst = worst.min(d2 / slack);
    }
    let argmin = curve.argmin_convexified();
    let robust = (argmin - ROBUST_BASIN.0).abs() <= ROBUST_BASIN.1;
    // the raw field's own grid minimizer is the narrow basin, so the choice is not trivial
    let f = demo_field();
    let raw = (0..=6000)
        .map(|i| -3.0 + 1e-3 * i as f64)
        .min_by(|a, b| {
            let fa = f.value(&Vector::from_element(1, *a)).unwrap();
            let fb = f.value(&Vector::from_element(1, *b)).unwrap();
            fa.total_cmp(&fb)
        })
        .unwrap();
    let narrow = (raw - NARROW_BASIN).abs() < 0.1;
    Outcome::new(
        convex && robust && narrow,
        format!(
            "second differences >= -3 std_err at every node (min ratio {worst:.2}): {convex}; convexified argmin {argmin} in the wide basin: {robust}; raw grid argmin {raw} in the narrow basin: {narrow}"
        ),
    )
}

fn classification() -> Outcome {
    let one = Vector::from_element(1, 1.0);
    let at_zero = erfc_loss(&Vector::zeros(1), &one, 1.0, 1.0);
    let at_one = erfc_loss(&Vector::from_element(1, SQRT_2), &one, 1.0, 1.0);
    // log(erfc(1) / 2) + 1, erfc(1) from a 50-digit evaluation
    let hand = (0.157_299_207_050_285_13_f64 / 2.0).ln() + 1.0;
    let values_ok = (at_zero - 0.5f64.ln()).abs() <= 1e-6 && (at_one - hand).abs() <= 1e-6;

    let mut accuracies = Vec::new();
    for seed in 0..20 {
        let mut streams = Streams::new(13_000 + seed);
        let train = gaussian_blobs(500, 4.0, 1.0, &mut streams);
        let test = gaussian_blobs(500, 4.0, 1.0, &mut streams);
        let report = train_classifier(&train, &ClassifierConfig::default()).unwrap();
        accuracies.push(accuracy(&report.theta, &test));
    }
    let min_acc = accuracies.iter().copied().fold(f64::INFINITY, f64::min);

    let n = 100_000;
    let clean = Dataset::new(Matrix::zeros(n, 1), Vector::from_element(n, 1.0)).unwrap();
    let mut flips = Vec::new();
    let mut flips_ok = true;
    for (i, sigma) in [0.5, 1.0, 2.0].into_iter().enumerate() {
        let noisy = corrupt_labels(&clean, sigma, &mut Streams::new(13_100 + i as u64)).unwrap();
        let rate = noisy.labels.iter().filter(|&&y| y < 0.0).count() as f64 / n as f64;
        let expected = Normal::new(0.0, 1.0).unwrap().cdf(-1.0 / sigma);
        flips_ok &= (rate - expected).abs() <= 0.01;
        flips.push(format!("sigma {sigma}: {rate:.4} vs {expected:.4}"));
    }
    Outcome::new(
        values_ok && min_acc >= 0.95 && flips_ok,
        format!(
            "loss at 0 {at_zero:.9}, at the erfc(1) point {at_one:.9} vs {hand:.9}; lowest blob test accuracy over 20 seeds {min_acc:.3} (need 0.95); flip rates {}",
            flips.join(", ")
        ),
    )
}

fn noisy_net() -> Outcome {
    let config = NoisyNetConfig::default();
    let mut ratios = Vec::new();
    let mut round_trip = true;
    for seed in 0..20 {
        let mut data_streams = Streams::new(1000 + seed);
        let train = sine_regression(200, 1.0, FRAC_PI_2, 0.0, &mut data_streams);
        let test = sine_regression(100, 1.0, FRAC_PI_2, 0.0, &mut data_streams);
        let report = match train_noisy_net(&train, Some(&test), &config, &mut Streams::new(seed)) {
            Ok(r) => r,
            Err(e) => return Outcome::new(false, format!("seed {seed}: {e}")),
        };
        let mean = train.labels.mean();
        let var = train.labels.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / train.len() as f64;
        ratios.push(report.train_mse / var);
        let table = report.curve_table();
        let text = table.to_csv_string();
        let back = Table::read_from(text.as_bytes()).unwrap();
        round_trip &= back.header == table.header
            && back.rows.len() == table.rows.len()
            && back.rows.iter().flatten().zip(table.rows.iter().flatten()).all(|(a, b)| a.to_bits() == b.to_bits());
    }
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let median = (sorted[9] + sorted[10]) / 2.0;
    Outcome::new(
        median <= 0.1 && round_trip,
        format!(
            "median train MSE / target variance {median:.3} over 20 seeds (need <= 0.1), range [{:.3}, {:.3}]; curve CSV round-trips bit-exactly: {round_trip}",
            sorted[0], sorted[19]
        ),
    )
}

fn csv_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv") {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn cli_determinism() -> Outcome {
    let tmp = TempDir::new().unwrap();
    let configs = tmp.path().join("configs");
    fs::create_dir_all(&configs).unwrap();
    let net_cfg = configs.join("net.cfg");
    fs::write(&net_cfg, "iterations = 200\neval_every = 50\nhidden = 8\n").unwrap();
    let ctl_cfg = configs.join("control.cfg");
    fs::write(&ctl_cfg, "iterations = 500\nhorizon = 4\n").unwrap();
    let roll_cfg = configs.join("rollout.cfg");
    fs::write(&roll_cfg, "horizon = 4\n").unwrap();
    let (net, ctl, roll) = (net_cfg.display().to_string(), ctl_cfg.display().to_string(), roll_cfg.display().to_string());

    let run_all = |root: &Path| -> Result<(), String> {
        let d = |name: &str| root.join(name).display().to_string();
        let runs: Vec<Vec<String>> = vec![
            vec!["demo-1d".into(), "--samples".into(), "20000".into(), "--out".into(), d("demo")],
            vec!["classify".into(), "train".into(), "--out".into(), d("classify_train")],
            vec![
                "classify".into(), "eval".into(), "--data".into(), d("classify_train/test.csv"),
                "--weights".into(), d("classify_train/weights.csv"), "--out".into(), d("classify_eval"),
            ],
            vec!["classify".into(), "corrupt".into(), "--data".into(), d("classify_train/train.csv"), "--out".into(), d("classify_corrupt")],
            vec!["nnet".into(), "train".into(), "--config".into(), net.clone(), "--out".into(), d("nnet_train")],
            vec![
                "nnet".into(), "eval".into(), "--config".into(), net.clone(), "--data".into(), d("nnet_train/test.csv"),
                "--weights".into(), d("nnet_train/gains"), "--out".into(), d("nnet_eval"),
            ],
            vec!["control".into(), "train".into(), "--config".into(), ctl.clone(), "--samples".into(), "5000".into(), "--out".into(), d("control_train")],
            vec![
                "control".into(), "rollout".into(), "--config".into(), roll.clone(), "--gains".into(), d("control_train/gains"),
                "--samples".into(), "5000".into(), "--out".into(), d("control_rollout"),
            ],
            vec!["synth".into(), "solve".into(), "--out".into(), d("synth_solve")],
            vec!["synth".into(), "eval".into(), "--gains".into(), d("synth_solve/gains"), "--samples".into(), "20000".into(), "--out".into(), d("synth_eval")],
        ];
        for args in runs {
            let mut argv = vec!["riskvex".to_string(), "--quiet".into(), "--seed".into(), "11".into()];
            argv.extend(args.iter().cloned());
            let code = riskvex_cli::run_args(&argv);
            if code != 0 {
                return Err(format!("`{}` exited with {code}", args.join(" ")));
            }
        }
        Ok(())
    };
    let (first, second) = (tmp.path().join("first"), tmp.path().join("second"));
    for root in [&first, &second] {
        if let Err(e) = run_all(root) {
            return Outcome::new(false, e);
        }
    }
    let (a, b) = (csv_files(&first), csv_files(&second));
    let differing: Vec<String> =
        a.iter().filter(|(p, bytes)| b.get(*p) != Some(*bytes)).map(|(p, _)| p.display().to_string()).collect();
    let same_set = a.keys().eq(b.keys());
    Outcome::new(
        same_set && differing.is_empty() && !a.is_empty(),
        format!("10 subcommand invocations twice, {} CSV files, differing {differing:?}, same file set: {same_set}", a.len()),
    )
}

type Check = fn() -> Outcome;

fn main() -> ExitCode {
    let criteria: [(u32, &str, Option<Duration>, Check); 15] = [
        (1, "certificate correctness", Some(Duration::from_millis(1)), certificate_examples),
        (2, "analytic Gaussian oracle", secs(30), gaussian_oracle),
        (3, "midpoint convexity", secs(300), midpoint_convexity),
        (4, "gradient unbiasedness", secs(300), gradient_unbiasedness),
        (5, "sensitivity bound", None, sensitivity_bound),
        (6, "solver certificate", secs(120), solver_certificate),
        (7, "variance bound formula", None, variance_bound_example),
        (8, "pathwise policy gradient", secs(60), pathwise_gradient),
        (9, "estimator agreement", secs(300), estimator_agreement),
        (10, "LEQG triangle", secs(300), leqg_triangle),
        (11, "det-max cross-check", secs(600), detmax_cross_check),
        (12, "one-dimensional demo", secs(60), demo_analogue),
        (13, "classification", None, classification),
        (14, "noisy-net regression", None, noisy_net),
        (15, "CLI determinism", None, cli_determinism),
    ];
    // numeric arguments select criteria; anything else (libtest flags) is ignored
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    let mut ran = 0;
    for (id, name, budget, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        ran += 1;
        if !run_criterion(id, name, budget, check) {
            failed.push(id);
        }
    }
    println!("acceptance: {}/{ran} criteria pass", ran - failed.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failing criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
