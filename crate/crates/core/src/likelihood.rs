//! Approximate log-likelihood of a discretely observed diffusion: a sum of
//! saddlepoint transition log-densities, each conditioned on the previous
//! observation.

use std::sync::Arc;

use crate::cumulant::{BoundSystem, CumulantSet};
use crate::models::{DiffusionModel, ModelError, TimeSeries};
use crate::ode::{integrate, IntegratorConfig};
use crate::saddlepoint::{default_tol, TruncatedCgf};

/// What a failed transition contributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FailurePolicy {
    /// The whole likelihood becomes `-inf`.
    #[default]
    NegInfinity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodConfig {
    pub order: u32,
    pub integrator: IntegratorConfig<f64>,
    pub saddle_tol: f64,
    pub on_failure: FailurePolicy,
}

impl LikelihoodConfig {
    pub fn new(order: u32) -> Self {
        LikelihoodConfig {
            order,
            integrator: IntegratorConfig::default(),
            saddle_tol: default_tol(),
            on_failure: FailurePolicy::NegInfinity,
        }
    }

    pub fn for_model(model: &DiffusionModel) -> Self {
        Self::new(model.default_order())
    }
}

/// How a single transition was evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransitionStatus {
    Saddle,
    /// Newton failed; the Gaussian saddlepoint was used.
    GaussianFallback,
    /// The cumulant ODEs could not be integrated.
    IntegrationFailed,
    /// The predicted covariance was not positive definite.
    DegenerateCumulants,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionTerm {
    pub log_density: f64,
    pub status: TransitionStatus,
}

/// Predicted cumulants after `dt` from a point mass at `x_prev`.
pub fn predict_cumulants(
    system: &BoundSystem<f64>,
    x_prev: &[f64],
    dt: f64,
    cfg: &LikelihoodConfig,
) -> Option<CumulantSet<f64>> {
    let k0 = CumulantSet::point_mass(Arc::clone(system.shape()), x_prev).ok()?;
    integrate(system, &k0, dt, &cfg.integrator).ok()
}

pub fn transition_term(
    system: &BoundSystem<f64>,
    x_prev: &[f64],
    x_next: &[f64],
    dt: f64,
    cfg: &LikelihoodConfig,
) -> TransitionTerm {
    let fail = |status| TransitionTerm {
        log_density: f64::NEG_INFINITY,
        status,
    };
    let Some(kappa) = predict_cumulants(system, x_prev, dt, cfg) else {
        return fail(TransitionStatus::IntegrationFailed);
    };
    let Ok(cgf) = TruncatedCgf::new(kappa) else {
        return fail(TransitionStatus::DegenerateCumulants);
    };
    match cgf.solve_saddle(x_next, cfg.saddle_tol) {
        Ok(sol) if !sol.log_density.is_nan() => TransitionTerm {
            log_density: sol.log_density,
            status: if sol.fallback_used {
                TransitionStatus::GaussianFallback
            } else {
                TransitionStatus::Saddle
            },
        },
        _ => fail(TransitionStatus::DegenerateCumulants),
    }
}

/// Saddlepoint log-density of `x_next` given `x_prev` after `dt`; `-inf`
/// when the cumulant prediction fails.
pub fn transition_logdensity(
    system: &BoundSystem<f64>,
    x_prev: &[f64],
    x_next: &[f64],
    dt: f64,
    cfg: &LikelihoodConfig,
) -> f64 {
    transition_term(system, x_prev, x_next, dt, cfg).log_density
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoglikReport {
    pub value: f64,
    pub terms: Vec<TransitionTerm>,
}

impl LoglikReport {
    pub fn fallbacks(&self) -> usize {
        self.count(TransitionStatus::GaussianFallback)
    }

    pub fn failures(&self) -> usize {
        self.terms.len() - self.count(TransitionStatus::Saddle) - self.fallbacks()
    }

    fn count(&self, s: TransitionStatus) -> usize {
        self.terms.iter().filter(|t| t.status == s).count()
    }
}

/// Per-transition breakdown of [`loglik`]. Stops at the first failed term.
pub fn loglik_report(
    model: &DiffusionModel,
    series: &TimeSeries,
    theta: &[f64],
    cfg: &LikelihoodConfig,
) -> Result<LoglikReport, ModelError> {
    model.check_params(theta)?;
    let system = model.ode_system(cfg.order)?.bind(theta);
    let mut value = 0.0;
    let mut terms = Vec::with_capacity(series.len().saturating_sub(1));
    for (a, b, dt) in series.transitions() {
        let t = transition_term(&system, a, b, dt, cfg);
        value += t.log_density;
        terms.push(t);
        if t.log_density == f64::NEG_INFINITY {
            match cfg.on_failure {
                FailurePolicy::NegInfinity => {
                    value = f64::NEG_INFINITY;
                    break;
                }
            }
        }
    }
    if value.is_nan() {
        value = f64::NEG_INFINITY;
    }
    Ok(LoglikReport { value, terms })
}

/// Approximate log-likelihood `sum_i ln f(x_i | x_{i-1})`; the initial
/// state is not scored. Parameters outside the model's support give `-inf`.
pub fn loglik(model: &DiffusionModel, series: &TimeSeries, theta: &[f64], cfg: &LikelihoodConfig) -> f64 {
    loglik_report(model, series, theta, cfg).map_or(f64::NEG_INFINITY, |r| r.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{true_transition_logdensity, ModelKind};
    use approx::assert_relative_eq;

    fn series(t: &[f64], x: &[f64]) -> TimeSeries {
        TimeSeries::new(t.to_vec(), x.iter().map(|&v| vec![v]).collect()).unwrap()
    }

    #[test]
    fn brownian_single_term() {
        let bm = DiffusionModel::new(ModelKind::Bm);
        let cfg = LikelihoodConfig::for_model(&bm);
        let s = series(&[0.0, 1.0], &[0.0, 0.0]);
        assert_relative_eq!(loglik(&bm, &s, &[1.0], &cfg), -0.9189385332046727, epsilon = 1e-12);
    }

    #[test]
    fn additivity() {
        let bm = DiffusionModel::new(ModelKind::Bm);
        let cfg = LikelihoodConfig::for_model(&bm);
        let sys = bm.ode_system(cfg.order).unwrap().bind(&[2.0]);
        let s3 = series(&[0.0, 1.0, 1.5], &[0.0, 0.3, -0.2]);
        let total = loglik(&bm, &s3, &[2.0], &cfg);
        let a = transition_logdensity(&sys, &[0.0], &[0.3], 1.0, &cfg);
        let b = transition_logdensity(&sys, &[0.3], &[-0.2], 0.5, &cfg);
        assert_eq!(total, a + b);
        let s2 = series(&[0.0, 1.0], &[0.0, 0.3]);
        assert_eq!(loglik(&bm, &s2, &[2.0], &cfg), a);
    }

    #[test]
    fn markov_reconditioning() {
        let cir = DiffusionModel::new(ModelKind::Cir);
        let cfg = LikelihoodConfig::for_model(&cir);
        let th = [0.5, 5.0, 1.0];
        let a = loglik_report(&cir, &series(&[0.0, 1.0, 2.0, 3.0], &[4.0, 6.0, 5.0, 5.5]), &th, &cfg).unwrap();
        let b = loglik_report(&cir, &series(&[0.0, 1.0, 2.0, 3.0], &[7.0, 3.0, 5.0, 5.5]), &th, &cfg).unwrap();
        assert_eq!(a.terms[2], b.terms[2]);
        assert_ne!(a.terms[0], b.terms[0]);
    }

    #[test]
    fn cir_close_to_exact() {
        let cir = DiffusionModel::new(ModelKind::Cir);
        let cfg = LikelihoodConfig::for_model(&cir);
        let th = [1.5, 58.0, 15f64.sqrt()];
        let sys = cir.ode_system(4).unwrap().bind(&th);
        let approx = transition_logdensity(&sys, &[50.0], &[50.94], 1.0 / 12.0, &cfg);
        let exact = true_transition_logdensity(&cir, &th, 50.0, 50.94, 1.0 / 12.0).unwrap();
        assert!((approx.exp() / exact.exp() - 1.0).abs() < 0.01, "{approx} vs {exact}");
    }

    #[test]
    fn short_step_concentrates() {
        let cir = DiffusionModel::new(ModelKind::Cir);
        let cfg = LikelihoodConfig::for_model(&cir);
        let sys = cir.ode_system(4).unwrap().bind(&[1.5, 58.0, 15f64.sqrt()]);
        let mut last = f64::INFINITY;
        for dt in [1e-2, 1e-4, 1e-6] {
            let v = transition_logdensity(&sys, &[50.0], &[51.0], dt, &cfg);
            assert!(v < last);
            last = v;
        }
        // the Gaussian part alone is -(1^2)/(2 * 15 * 50 * 1e-6) ~ -667
        assert!(last < -500.0, "{last}");
    }

    #[test]
    fn outside_support_is_neg_infinity() {
        let cir = DiffusionModel::new(ModelKind::Cir);
        let cfg = LikelihoodConfig::for_model(&cir);
        let s = series(&[0.0, 1.0], &[1.0, 1.1]);
        assert_eq!(loglik(&cir, &s, &[-1.0, 1.0, 1.0], &cfg), f64::NEG_INFINITY);
    }

    #[test]
    fn blow_up_is_neg_infinity() {
        // quadratic drift explodes the moment equations over a long step
        let biv = DiffusionModel::new(ModelKind::Bivariate);
        let mut cfg = LikelihoodConfig::for_model(&biv);
        cfg.integrator.max_steps = 200;
        let s = TimeSeries::new(vec![0.0, 50.0], vec![vec![1.0, 5.0], vec![1.0, 5.0]]).unwrap();
        let r = loglik_report(&biv, &s, &[50.0, 0.001, 1.8, 0.5, 5.0, 1.0], &cfg).unwrap();
        assert_eq!(r.value, f64::NEG_INFINITY);
        assert_eq!(r.failures(), 1);
    }
}
