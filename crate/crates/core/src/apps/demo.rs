//! One-dimensional convexification demo.

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::objective::{check_convexity_certificate, log_exp_objective, smoothed_value, RiskModel, ScalarField};
use crate::table::Table;

/// Center and half-width of the wide basin of [`demo_field`].
pub const ROBUST_BASIN: (f64, f64) = (1.2, 1.0);
/// Center of the narrow deep basin of [`demo_field`].
pub const NARROW_BASIN: f64 = -1.5;

/// Wide shallow basin at `1.2`, narrow deep basin at `-1.5`, and a small ripple:
///
/// ```text
/// g(t) = -2 exp(-(t - 1.2)^2 / 2) - 3 exp(-(t + 1.5)^2 / (2 * 0.05^2)) + 0.15 cos(8 t)
/// ```
pub fn demo_field() -> ScalarField {
    const W: f64 = 0.05;
    let parts = |t: f64| {
        let wide = -2.0 * (-(t - 1.2).powi(2) / 2.0).exp();
        let narrow = -3.0 * (-(t - NARROW_BASIN).powi(2) / (2.0 * W * W)).exp();
        (wide, narrow)
    };
    ScalarField::new(1, 0.15, move |x| {
        let t = x[0];
        let (wide, narrow) = parts(t);
        wide + narrow + 0.15 * (8.0 * t).cos()
    })
    .with_gradient(move |x| {
        let t = x[0];
        let (wide, narrow) = parts(t);
        let d = -wide * (t - 1.2) - narrow * (t - NARROW_BASIN) / (W * W) - 1.2 * (8.0 * t).sin();
        Vector::from_element(1, d)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoConfig {
    pub alpha: f64,
    pub sigma: f64,
    pub kappa: f64,
    pub points: usize,
    pub samples: usize,
    pub lower: f64,
    pub upper: f64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self { alpha: 4.0, sigma: 0.5, kappa: 1.0, points: 121, samples: 100_000, lower: -3.0, upper: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoCurve {
    pub theta: Vec<f64>,
    pub field: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub smoothed_std_err: Vec<f64>,
    pub convexified: Vec<f64>,
    pub convexified_std_err: Vec<f64>,
}

impl DemoCurve {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["theta", "field", "smoothed", "smoothed_std_err", "convexified", "convexified_std_err"]);
        for i in 0..self.theta.len() {
            t.push(vec![
                self.theta[i],
                self.field[i],
                self.smoothed[i],
                self.smoothed_std_err[i],
                self.convexified[i],
                self.convexified_std_err[i],
            ]);
        }
        t
    }

    pub fn argmin_convexified(&self) -> f64 {
        let i = (0..self.theta.len()).min_by(|&a, &b| self.convexified[a].total_cmp(&self.convexified[b])).unwrap_or(0);
        self.theta[i]
    }
}

/// `v[i-1] - 2 v[i] + v[i+1]` for interior points.
pub fn second_differences(v: &[f64]) -> Vec<f64> {
    v.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).collect()
}

/// Evaluates the field, its smoothing and the convexified objective on a
/// uniform grid. All grid points share the same perturbation draws.
pub fn demo_1d(field: &ScalarField, config: &DemoConfig, seed: u64) -> Result<DemoCurve> {
    if config.points < 2 || !(config.lower < config.upper) {
        return Err(Error::contract("grid needs at least two points and lower < upper"));
    }
    let model = RiskModel::isotropic(config.alpha, config.sigma, config.kappa, 1)?;
    let cert = check_convexity_certificate(&model);
    if !cert.holds {
        return Err(Error::Uncertified { margin: cert.margin, tolerance: cert.tolerance });
    }
    let base = model.sampler(seed)?;
    let h = (config.upper - config.lower) / (config.points - 1) as f64;
    let mut curve = DemoCurve {
        theta: Vec::with_capacity(config.points),
        field: Vec::with_capacity(config.points),
        smoothed: Vec::with_capacity(config.points),
        smoothed_std_err: Vec::with_capacity(config.points),
        convexified: Vec::with_capacity(config.points),
        convexified_std_err: Vec::with_capacity(config.points),
    };
    for i in 0..config.points {
        let t = config.lower + h * i as f64;
        let theta = Vector::from_element(1, t);
        let mut sampler = base.clone();
        let smooth = smoothed_value(field, &model, &theta, config.samples, &mut sampler)?;
        let conv = log_exp_objective(field, &model, &theta, config.samples, &mut sampler)?;
        curve.theta.push(t);
        curve.field.push(field.value(&theta)?);
        curve.smoothed.push(smooth.value);
        curve.smoothed_std_err.push(smooth.std_err);
        curve.convexified.push(conv.value);
        curve.convexified_std_err.push(conv.std_err);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_gradient_matches_finite_differences() {
        let f = demo_field();
        for i in 0..200 {
            let t = -3.0 + 0.03 * i as f64;
            let h = 1e-6;
            let fd = (f.value(&Vector::from_element(1, t + h)).unwrap() - f.value(&Vector::from_element(1, t - h)).unwrap()) / (2.0 * h);
            let g = f.gradient(&Vector::from_element(1, t)).unwrap()[0];
            assert!((fd - g).abs() < 1e-5 * (1.0 + g.abs()), "{t}: {fd} vs {g}");
        }
    }

    #[test]
    fn constant_field_gives_pure_quadratic() {
        let cfg = DemoConfig { points: 13, samples: 1000, ..DemoConfig::default() };
        let c = demo_1d(&ScalarField::constant(1, 0.3), &cfg, 1).unwrap();
        for (t, v) in c.theta.iter().zip(&c.convexified) {
            assert!((v - (0.3 + 0.5 * t * t)).abs() < 1e-12);
        }
    }

    #[test]
    fn uncertified_config_is_refused() {
        let cfg = DemoConfig { alpha: 1.0, ..DemoConfig::default() };
        assert!(matches!(demo_1d(&demo_field(), &cfg, 1), Err(Error::Uncertified { .. })));
    }

    #[test]
    fn narrow_basin_is_deeper_but_not_chosen() {
        let f = demo_field();
        let v = |t: f64| f.value(&Vector::from_element(1, t)).unwrap();
        assert!(v(NARROW_BASIN) < v(ROBUST_BASIN.0) - 0.5);
        let cfg = DemoConfig { points: 61, samples: 20_000, ..DemoConfig::default() };
        let c = demo_1d(&f, &cfg, 7).unwrap();
        assert!((c.argmin_convexified() - ROBUST_BASIN.0).abs() < ROBUST_BASIN.1);
    }
}
