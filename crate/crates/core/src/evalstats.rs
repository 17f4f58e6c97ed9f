//! Accuracy and coverage instrumentation: Integrated Error between
//! densities, error ratios, and the simulate-fit-summarize coverage harness.

use std::fmt;
use std::io::{Read, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::likelihood::{predict_cumulants, LikelihoodConfig};
use crate::mcmc::{run_chain_with, summarize, ChainConfig, FlatPrior, McmcError, PosteriorSummary, ProposalConfig};
use crate::models::{
    seeded_rng, simulate_cir_exact, simulate_path, true_transition_logdensity, DiffusionModel, ModelError, ModelKind,
    TimeSeries,
};
use crate::quadrature::{integrate, QuadError, QuadOptions};
use crate::saddlepoint::TruncatedCgf;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mcmc(#[from] McmcError),
    #[error("denominator Integrated Error is zero")]
    ZeroDenominator,
    #[error("cumulant prediction failed: {0}")]
    Prediction(String),
    #[error("invalid study configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Quadrature settings used for Integrated Error.
pub fn ie_options() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-8,
        rel_tol: 1e-8,
        max_subdivisions: 4000,
    }
}

/// `int_a^b |f - g| dx`.
pub fn integrated_error<F: Fn(f64) -> f64, G: Fn(f64) -> f64>(
    f_true: F,
    f_hat: G,
    domain: (f64, f64),
) -> Result<f64, EvalError> {
    Ok(integrate(|x| (f_true(x) - f_hat(x)).abs(), domain.0, domain.1, &ie_options())?.value)
}

/// `IE(A) / IE(B)` against the same reference density.
pub fn error_ratio<F, A, B>(f_true: F, approx_a: A, approx_b: B, domain: (f64, f64)) -> Result<f64, EvalError>
where
    F: Fn(f64) -> f64,
    A: Fn(f64) -> f64,
    B: Fn(f64) -> f64,
{
    let ea = integrated_error(&f_true, approx_a, domain)?;
    let eb = integrated_error(&f_true, approx_b, domain)?;
    if eb == 0.0 {
        return Err(EvalError::ZeroDenominator);
    }
    Ok(ea / eb)
}

/// Saddlepoint transition density of a scalar model, as a closure over the
/// predicted cumulants.
pub fn saddle_transition_density(
    model: &DiffusionModel,
    theta: &[f64],
    x0: f64,
    dt: f64,
    order: u32,
) -> Result<impl Fn(f64) -> f64, EvalError> {
    let cfg = LikelihoodConfig::new(order);
    let system = model.ode_system(order)?.bind(theta);
    let kappa = predict_cumulants(&system, &[x0], dt, &cfg)
        .ok_or_else(|| EvalError::Prediction(format!("integration failed at theta {theta:?}")))?;
    let cgf = TruncatedCgf::new(kappa).map_err(|e| EvalError::Prediction(e.to_string()))?;
    Ok(move |x: f64| cgf.density(&[x]).unwrap_or(0.0))
}

/// Integration window for a scalar transition: twelve predicted standard
/// deviations around the predicted mean, clipped at zero for positive
/// processes.
pub fn default_domain(model: &DiffusionModel, theta: &[f64], x0: f64, dt: f64) -> Result<(f64, f64), EvalError> {
    let cfg = LikelihoodConfig::new(2);
    let system = model.ode_system(2)?.bind(theta);
    let k = predict_cumulants(&system, &[x0], dt, &cfg)
        .ok_or_else(|| EvalError::Prediction(format!("integration failed at theta {theta:?}")))?;
    let (m, sd) = (k.values()[0], k.values()[1].max(0.0).sqrt());
    let mut lo = m - 12.0 * sd;
    if model.positive_states()[0] {
        lo = lo.max(0.0);
    }
    Ok((lo, m + 12.0 * sd))
}

/// Integrated Errors of the order-`order` saddlepoint and of the Gaussian
/// (order 2) approximation against the exact transition density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionAccuracy {
    pub ie_saddle: f64,
    pub ie_gaussian: f64,
    pub domain: (f64, f64),
}

pub fn transition_accuracy(
    model: &DiffusionModel,
    theta: &[f64],
    x0: f64,
    dt: f64,
    order: u32,
) -> Result<TransitionAccuracy, EvalError> {
    if !model.kind().has_exact_density() {
        return Err(ModelError::NoExactDensity(model.kind()).into());
    }
    model.check_params(theta)?;
    let domain = default_domain(model, theta, x0, dt)?;
    let exact = |x: f64| true_transition_logdensity(model, theta, x0, x, dt).map_or(0.0, f64::exp);
    let saddle = saddle_transition_density(model, theta, x0, dt, order)?;
    let gauss = saddle_transition_density(model, theta, x0, dt, 2)?;
    Ok(TransitionAccuracy {
        ie_saddle: integrated_error(exact, saddle, domain)?,
        ie_gaussian: integrated_error(exact, gauss, domain)?,
        domain,
    })
}

/// Likelihood used inside the coverage study.
#[derive(Debug, Clone, PartialEq)]
pub enum StudyLikelihood {
    Saddlepoint(LikelihoodConfig),
    /// Closed-form transition densities (scalar models with an oracle).
    Exact,
}

/// How replicate series are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    EulerMaruyama { substeps: usize },
    /// Exact noncentral chi-squared draws; CIR only.
    ExactCir,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageConfig {
    pub theta_true: Vec<f64>,
    /// Chain start; the truth when `None`.
    pub theta0: Option<Vec<f64>>,
    pub replicates: usize,
    pub series_length: usize,
    pub x0: Vec<f64>,
    pub dt: f64,
    pub chain_length: usize,
    pub burn_in: usize,
    /// Credibility level, e.g. 0.9.
    pub level: f64,
    pub step_sds: Vec<f64>,
    pub likelihood: StudyLikelihood,
    pub generator: Generator,
    pub seed: u64,
    pub jobs: usize,
}

/// Result of one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub index: usize,
    pub seed: u64,
    pub result: Result<(PosteriorSummary, Vec<bool>), String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub param_names: Vec<String>,
    pub theta_true: Vec<f64>,
    pub level: f64,
    pub hits: Vec<usize>,
    pub outcomes: Vec<ReplicateOutcome>,
}

impl CoverageReport {
    /// Replicates that produced an interval.
    pub fn completed(&self) -> usize {
        self.outcomes.iter().filter(|o| o.result.is_ok()).count()
    }

    pub fn failed(&self) -> usize {
        self.outcomes.len() - self.completed()
    }

    pub fn coverage(&self) -> Vec<f64> {
        let n = self.completed();
        self.hits
            .iter()
            .map(|&h| if n == 0 { f64::NAN } else { h as f64 / n as f64 })
            .collect()
    }

    pub fn replicate_seeds(&self) -> Vec<u64> {
        self.outcomes.iter().map(|o| o.seed).collect()
    }

    pub fn mean_acceptance(&self) -> f64 {
        let rates: Vec<f64> = self
            .outcomes
            .iter()
            .filter_map(|o| o.result.as_ref().ok().map(|(s, _)| s.acceptance_rate))
            .collect();
        rates.iter().sum::<f64>() / rates.len().max(1) as f64
    }

    /// CSV with columns `parameter, hits, replicates, coverage`.
    pub fn to_writer<W: Write>(&self, writer: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| EvalError::Io(std::io::Error::other(e));
        w.write_record(["parameter", "hits", "replicates", "coverage"]).map_err(io)?;
        let cov = self.coverage();
        for (k, name) in self.param_names.iter().enumerate() {
            w.write_record([
                name.clone(),
                self.hits[k].to_string(),
                self.completed().to_string(),
                cov[k].to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One row of a coverage CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub parameter: String,
    pub hits: usize,
    pub replicates: usize,
    pub coverage: f64,
}

/// Reads the table written by [`CoverageReport::to_writer`].
pub fn read_coverage_csv<R: Read>(reader: R) -> Result<Vec<CoverageRow>, EvalError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let bad = |m: String| EvalError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, m));
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().ne(["parameter", "hits", "replicates", "coverage"]) {
        return Err(bad("expected header parameter,hits,replicates,coverage".into()));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| bad(format!("line {line}: bad field `{}`", &rec[i]));
        rows.push(CoverageRow {
            parameter: rec[0].to_string(),
            hits: rec[1].parse().map_err(|_| field(1))?,
            replicates: rec[2].parse().map_err(|_| field(2))?,
            coverage: rec[3].parse().map_err(|_| field(3))?,
        });
    }
    Ok(rows)
}

impl fmt::Display for CoverageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "Observed coverage of {:.0}% intervals ({} replicates, {} failed)",
            self.level * 100.0,
            self.outcomes.len(),
            self.failed()
        )?;
        writeln!(f, "{:<10} {:>12} {:>8} {:>10}", "parameter", "true", "hits", "coverage")?;
        let cov = self.coverage();
        for (k, name) in self.param_names.iter().enumerate() {
            writeln!(
                f,
                "{:<10} {:>12.6} {:>4}/{:<3} {:>10.2}",
                name,
                self.theta_true[k],
                self.hits[k],
                self.completed(),
                cov[k]
            )?;
        }
        write!(f, "mean acceptance rate {:.3}", self.mean_acceptance())
    }
}

fn exact_loglik(model: &DiffusionModel, series: &TimeSeries, theta: &[f64]) -> f64 {
    let mut total = 0.0;
    for (a, b, dt) in series.transitions() {
        match true_transition_logdensity(model, theta, a[0], b[0], dt) {
            Ok(v) if !v.is_nan() => total += v,
            _ => return f64::NEG_INFINITY,
        }
    }
    total
}

/// Simulates the series for replicate `index`.
pub fn simulate_replicate(model: &DiffusionModel, cfg: &CoverageConfig, index: usize) -> Result<TimeSeries, EvalError> {
    let seed = cfg.seed.wrapping_add(index as u64);
    let mut rng = seeded_rng(seed, 1);
    let times: Vec<f64> = (0..cfg.series_length).map(|i| i as f64 * cfg.dt).collect();
    Ok(match cfg.generator {
        Generator::EulerMaruyama { substeps } => {
            let inst = model.build(&cfg.theta_true)?;
            simulate_path(&inst, &cfg.x0, &times, substeps, &mut rng)?
        }
        Generator::ExactCir => {
            if model.kind() != ModelKind::Cir {
                return Err(EvalError::Config("exact generator is CIR only".into()));
            }
            simulate_cir_exact(&cfg.theta_true, cfg.x0[0], &times, &mut rng)?
        }
    })
}

fn run_replicate(model: &DiffusionModel, cfg: &CoverageConfig, index: usize) -> ReplicateOutcome {
    let seed = cfg.seed.wrapping_add(index as u64);
    let result = (|| -> Result<(PosteriorSummary, Vec<bool>), EvalError> {
        let series = simulate_replicate(model, cfg, index)?;
        let chain_cfg = ChainConfig {
            length: cfg.chain_length,
            proposal: ProposalConfig::for_model(model, cfg.step_sds.clone())?,
            prior: FlatPrior::for_model(model),
        };
        let theta0 = cfg.theta0.as_deref().unwrap_or(&cfg.theta_true);
        let chain = match &cfg.likelihood {
            StudyLikelihood::Saddlepoint(lik) => run_chain_with(
                |th| crate::likelihood::loglik(model, &series, th, lik),
                model.param_names(),
                theta0,
                &chain_cfg,
                seed,
            )?,
            StudyLikelihood::Exact => run_chain_with(
                |th| exact_loglik(model, &series, th),
                model.param_names(),
                theta0,
                &chain_cfg,
                seed,
            )?,
        };
        let summary = summarize(&chain, cfg.burn_in, 1.0 - cfg.level)?;
        let covered = summary.covers(&cfg.theta_true);
        Ok((summary, covered))
    })()
    .map_err(|e| e.to_string());
    ReplicateOutcome { index, seed, result }
}

/// Simulate, fit and summarize `cfg.replicates` series; count how often
/// each true parameter falls inside its interval. Replicate `i` uses seed
/// `cfg.seed + i`. Failed replicates are kept in the report and excluded
/// from the coverage denominators.
pub fn coverage_study(model: &DiffusionModel, cfg: &CoverageConfig) -> Result<CoverageReport, EvalError> {
    model.check_params(&cfg.theta_true)?;
    if cfg.replicates == 0 {
        return Err(EvalError::Config("replicates must be at least 1".into()));
    }
    if cfg.series_length < 2 {
        return Err(EvalError::Config("series length must be at least 2".into()));
    }
    if cfg.burn_in >= cfg.chain_length {
        return Err(EvalError::Config("burn-in must be shorter than the chain".into()));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(EvalError::Config(format!("level {} outside (0, 1)", cfg.level)));
    }
    if cfg.likelihood == StudyLikelihood::Exact && !model.kind().has_exact_density() {
        return Err(ModelError::NoExactDensity(model.kind()).into());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| EvalError::Config(e.to_string()))?;
    let outcomes: Vec<ReplicateOutcome> =
        pool.install(|| (0..cfg.replicates).into_par_iter().map(|i| run_replicate(model, cfg, i)).collect());
    let p = model.n_params();
    let mut hits = vec![0; p];
    for o in &outcomes {
        if let Ok((_, covered)) = &o.result {
            for (h, &c) in hits.iter_mut().zip(covered) {
                *h += usize::from(c);
            }
        }
    }
    Ok(CoverageReport {
        param_names: model.param_names().to_vec(),
        theta_true: cfg.theta_true.clone(),
        level: cfg.level,
        hits,
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::distribution::{Continuous, ContinuousCDF, Normal};

    fn normal(m: f64) -> impl Fn(f64) -> f64 {
        let d = Normal::new(m, 1.0).unwrap();
        move |x| d.pdf(x)
    }

    #[test]
    fn identical_densities() {
        assert_eq!(integrated_error(normal(0.0), normal(0.0), (-10.0, 10.0)).unwrap(), 0.0);
    }

    #[test]
    fn shifted_normals() {
        let ie = integrated_error(normal(0.0), normal(0.1), (-12.0, 12.0)).unwrap();
        let phi = Normal::new(0.0, 1.0).unwrap().cdf(0.05);
        assert_relative_eq!(ie, 2.0 * (2.0 * phi - 1.0), epsilon = 1e-8);
        assert_relative_eq!(ie, 0.0797552, epsilon = 1e-7);
    }

    #[test]
    fn symmetry_and_ratio_reciprocity() {
        let ab = integrated_error(normal(0.0), normal(0.3), (-12.0, 12.0)).unwrap();
        let ba = integrated_error(normal(0.3), normal(0.0), (-12.0, 12.0)).unwrap();
        assert_relative_eq!(ab, ba, epsilon = 1e-12);
        let r1 = error_ratio(normal(0.0), normal(0.1), normal(0.4), (-12.0, 12.0)).unwrap();
        let r2 = error_ratio(normal(0.0), normal(0.4), normal(0.1), (-12.0, 12.0)).unwrap();
        assert_relative_eq!(r1 * r2, 1.0, epsilon = 1e-10);
        assert_eq!(error_ratio(normal(0.0), normal(0.1), normal(0.1), (-12.0, 12.0)).unwrap(), 1.0);
        assert!(matches!(
            error_ratio(normal(0.0), normal(0.1), normal(0.0), (-12.0, 12.0)),
            Err(EvalError::ZeroDenominator)
        ));
    }

    #[test]
    fn cir_saddle_beats_gaussian() {
        let cir = DiffusionModel::new(ModelKind::Cir);
        let acc = transition_accuracy(&cir, &[1.5, 58.0, 15f64.sqrt()], 50.0, 1.0 / 12.0, 4).unwrap();
        assert!(acc.ie_saddle < acc.ie_gaussian, "{acc:?}");
        assert!(acc.ie_saddle < 0.05);
    }

    #[test]
    fn oracle_less_model_rejected() {
        let h = DiffusionModel::new(ModelKind::Heston);
        assert!(matches!(
            transition_accuracy(&h, &[0.1, 1.0, 0.03, -0.5, 0.2], 1.0, 0.1, 3),
            Err(EvalError::Model(ModelError::NoExactDensity(_)))
        ));
    }

    fn bm_config(replicates: usize) -> CoverageConfig {
        CoverageConfig {
            theta_true: vec![1.0],
            theta0: None,
            replicates,
            series_length: 30,
            x0: vec![0.0],
            dt: 0.5,
            chain_length: 600,
            burn_in: 100,
            level: 0.9,
            step_sds: vec![0.3],
            likelihood: StudyLikelihood::Exact,
            generator: Generator::EulerMaruyama { substeps: 1 },
            seed: 17,
            jobs: 2,
        }
    }

    #[test]
    fn single_replicate_is_zero_or_one() {
        let bm = DiffusionModel::new(ModelKind::Bm);
        let r = coverage_study(&bm, &bm_config(1)).unwrap();
        assert!(r.coverage()[0] == 0.0 || r.coverage()[0] == 1.0);
        assert_eq!(r.replicate_seeds(), vec![17]);
    }

    #[test]
    fn deterministic_across_job_counts() {
        let bm = DiffusionModel::new(ModelKind::Bm);
        let a = coverage_study(&bm, &bm_config(4)).unwrap();
        let mut cfg = bm_config(4);
        cfg.jobs = 1;
        let b = coverage_study(&bm, &cfg).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.to_writer(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("parameter,hits,replicates,coverage\n"));
        let rows = read_coverage_csv(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].hits, a.hits[0]);
        assert_eq!(rows[0].replicates, a.completed());
        assert_eq!(rows[0].coverage, a.coverage()[0]);
    }

    #[test]
    fn failed_replicates_reported() {
        let bm = DiffusionModel::new(ModelKind::Bm);
        let mut cfg = bm_config(2);
        cfg.generator = Generator::ExactCir;
        let r = coverage_study(&bm, &cfg).unwrap();
        assert_eq!(r.failed(), 2);
        assert!(r.coverage()[0].is_nan());
    }
}
