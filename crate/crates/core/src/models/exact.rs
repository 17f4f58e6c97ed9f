use statrs::function::gamma::ln_gamma;

use super::{DiffusionModel, ModelError, ModelKind};
use crate::special::ln_bessel_i;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln()) - 0.5 * (x - mean).powi(2) / var
}

/// Conditional mean and variance of the CIR process after `dt`.
pub fn cir_moments(theta: &[f64], x0: f64, dt: f64) -> (f64, f64) {
    let (b, mu, s2) = (theta[0], theta[1], theta[2] * theta[2]);
    let e = (-b * dt).exp();
    let mean = mu + (x0 - mu) * e;
    let var = x0 * s2 / b * (e - e * e) + mu * s2 / (2.0 * b) * (1.0 - e).powi(2);
    (mean, var)
}

fn cir_logpdf(theta: &[f64], x0: f64, x1: f64, dt: f64) -> f64 {
    let (b, mu, s2) = (theta[0], theta[1], theta[2] * theta[2]);
    if x1 < 0.0 {
        return f64::NEG_INFINITY;
    }
    let e = (-b * dt).exp();
    let c = 2.0 * b / (s2 * (-(-b * dt).exp_m1()));
    let q = 2.0 * b * mu / s2 - 1.0;
    let u = c * x0 * e;
    let v = c * x1;
    if v == 0.0 {
        return match q {
            q if q > 0.0 => f64::NEG_INFINITY,
            q if q < 0.0 => f64::INFINITY,
            _ => c.ln() - u,
        };
    }
    if u == 0.0 {
        // limit of (v/u)^(q/2) I_q(2 sqrt(uv)) as u -> 0
        return c.ln() - v + q * v.ln() - ln_gamma(q + 1.0);
    }
    c.ln() - u - v + 0.5 * q * (v.ln() - u.ln()) + ln_bessel_i(q, 2.0 * (u * v).sqrt())
}

/// Exact log transition density `ln p(x1 | x0)` over a step `dt`, for the
/// models that have one (CIR, GBM, Brownian motion, Ornstein-Uhlenbeck).
pub fn true_transition_logdensity(
    model: &DiffusionModel,
    theta: &[f64],
    x0: f64,
    x1: f64,
    dt: f64,
) -> Result<f64, ModelError> {
    model.check_params(theta)?;
    if !(dt > 0.0) {
        return Err(ModelError::NonPositiveStep(dt));
    }
    if !model.state_admissible(&[x0]) || model.dim() != 1 {
        return Err(ModelError::InvalidState(vec![x0]));
    }
    Ok(match model.kind() {
        ModelKind::Cir => cir_logpdf(theta, x0, x1, dt),
        ModelKind::Gbm => {
            if x1 <= 0.0 || x0 <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            let (mu, s) = (theta[0], theta[1]);
            let m = x0.ln() + (mu - 0.5 * s * s) * dt;
            normal_logpdf(x1.ln(), m, s * s * dt) - x1.ln()
        }
        ModelKind::Bm => normal_logpdf(x1, x0, theta[0] * dt),
        ModelKind::Ou => {
            let (g, phi, s) = (theta[0], theta[1], theta[2]);
            let e = (-g * dt).exp();
            let var = s * s * -(-2.0 * g * dt).exp_m1() / (2.0 * g);
            normal_logpdf(x1, phi + (x0 - phi) * e, var)
        }
        k => return Err(ModelError::NoExactDensity(k)),
    })
}

pub fn true_transition_density(
    model: &DiffusionModel,
    theta: &[f64],
    x0: f64,
    x1: f64,
    dt: f64,
) -> Result<f64, ModelError> {
    true_transition_logdensity(model, theta, x0, x1, dt).map(f64::exp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, QuadOptions};
    use approx::assert_relative_eq;

    fn model(k: ModelKind) -> DiffusionModel {
        DiffusionModel::new(k)
    }

    fn tight() -> QuadOptions {
        QuadOptions {
            abs_tol: 1e-12,
            rel_tol: 1e-11,
            max_subdivisions: 5000,
        }
    }

    #[test]
    fn cir_reference_mass_and_mean() {
        let m = model(ModelKind::Cir);
        let th = [1.5, 58.0, 15f64.sqrt()];
        let f = |x: f64| true_transition_density(&m, &th, 50.0, x, 1.0 / 12.0).unwrap();
        let mass = integrate(f, 0.0, 200.0, &tight()).unwrap().value;
        assert_relative_eq!(mass, 1.0, epsilon = 1e-6);
        let mean = integrate(|x| x * f(x), 0.0, 200.0, &tight()).unwrap().value;
        let (cm, _) = cir_moments(&th, 50.0, 1.0 / 12.0);
        // 58 - 8 exp(-0.125)
        assert_relative_eq!(cm, 50.940025, epsilon = 1e-6);
        assert_relative_eq!(mean, cm, epsilon = 1e-6);
    }

    #[test]
    fn cir_small_sigma_no_overflow() {
        let m = model(ModelKind::Cir);
        let th = [0.12, 0.05, 0.02];
        let dt = 1.0 / 52.0;
        let (mean, var) = cir_moments(&th, 0.049, dt);
        let sd = var.sqrt();
        let f = |x: f64| true_transition_density(&m, &th, 0.049, x, dt).unwrap();
        assert!(f(mean).is_finite() && f(mean) > 0.0);
        let r = integrate(f, mean - 12.0 * sd, mean + 12.0 * sd, &tight()).unwrap();
        assert_relative_eq!(r.value, 1.0, epsilon = 1e-6);
        let r2 = integrate(|x| (x - mean).powi(2) * f(x), mean - 12.0 * sd, mean + 12.0 * sd, &tight()).unwrap();
        assert_relative_eq!(r2.value, var, max_relative = 1e-6);
    }

    #[test]
    fn cir_edge_states() {
        let m = model(ModelKind::Cir);
        let th = [1.5, 58.0, 15f64.sqrt()];
        assert_eq!(true_transition_logdensity(&m, &th, 50.0, -1.0, 0.1).unwrap(), f64::NEG_INFINITY);
        assert_eq!(true_transition_logdensity(&m, &th, 50.0, 0.0, 0.1).unwrap(), f64::NEG_INFINITY);
        let from_zero = |x: f64| true_transition_density(&m, &th, 0.0, x, 0.5).unwrap();
        let mass = integrate(from_zero, 0.0, 200.0, &tight()).unwrap().value;
        assert_relative_eq!(mass, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn gbm_is_lognormal() {
        let m = model(ModelKind::Gbm);
        let th = [0.12, 0.2];
        let dt = 1.0 / 12.0;
        let log_mean = 0.049f64.ln() + (0.12 - 0.02) * dt;
        // ln 0.049 + 0.1/12
        assert_relative_eq!(log_mean, -3.0076016, epsilon = 1e-7);
        let log_sd = 0.2 * dt.sqrt();
        assert_relative_eq!(log_sd, 0.0577350, epsilon = 1e-7);
        let x: f64 = 0.05;
        let oracle = (-(x.ln() - log_mean).powi(2) / (2.0 * log_sd * log_sd)).exp()
            / (x * log_sd * (2.0 * std::f64::consts::PI).sqrt());
        assert_relative_eq!(
            true_transition_density(&m, &th, 0.049, x, dt).unwrap(),
            oracle,
            max_relative = 1e-12
        );
    }

    #[test]
    fn random_parameters_integrate_to_one() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let cir = model(ModelKind::Cir);
        let gbm = model(ModelKind::Gbm);
        for _ in 0..10 {
            let th = [rng.random_range(0.1..3.0), rng.random_range(1.0..80.0), rng.random_range(0.5..5.0)];
            let x0 = rng.random_range(0.5..100.0);
            let dt = rng.random_range(0.01..1.0);
            let f = |x: f64| true_transition_density(&cir, &th, x0, x, dt).unwrap();
            let (mean, var) = cir_moments(&th, x0, dt);
            let hi = mean + 40.0 * var.sqrt();
            let mass = integrate(f, 0.0, hi, &tight()).unwrap().value;
            assert_relative_eq!(mass, 1.0, epsilon = 1e-6);

            let thg = [rng.random_range(-0.5..0.5), rng.random_range(0.05..0.8)];
            let f = |x: f64| true_transition_density(&gbm, &thg, x0, x, dt).unwrap();
            let mass = integrate(|y: f64| f(y.exp()) * y.exp(), x0.ln() - 10.0, x0.ln() + 10.0, &tight())
                .unwrap()
                .value;
            assert_relative_eq!(mass, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn short_step_concentrates() {
        let m = model(ModelKind::Cir);
        let th = [1.5, 58.0, 15f64.sqrt()];
        let (mean, var) = cir_moments(&th, 50.0, 1e-8);
        assert_relative_eq!(mean, 50.0, epsilon = 1e-6);
        assert!(var < 1e-5);
        assert!(true_transition_logdensity(&m, &th, 50.0, 51.0, 1e-8).unwrap() < -1e4);
    }

    #[test]
    fn gaussian_models_and_errors() {
        let bm = model(ModelKind::Bm);
        assert_relative_eq!(
            true_transition_logdensity(&bm, &[1.0], 0.0, 0.0, 1.0).unwrap(),
            -0.9189385332046727,
            epsilon = 1e-15
        );
        let ou = model(ModelKind::Ou);
        let lp = true_transition_logdensity(&ou, &[0.5, 5.0, 1.0], 5.0, 5.0, 100.0).unwrap();
        assert_relative_eq!(lp, -0.9189385332046727, epsilon = 1e-12);
        assert!(matches!(
            true_transition_logdensity(&model(ModelKind::Heston), &[0.1, 1.0, 0.03, -0.5, 0.2], 1.0, 1.0, 0.1),
            Err(ModelError::InvalidState(_)) | Err(ModelError::NoExactDensity(_))
        ));
        assert!(matches!(
            true_transition_logdensity(&bm, &[1.0], 0.0, 0.0, 0.0),
            Err(ModelError::NonPositiveStep(_))
        ));
    }
}
