//! Random-walk Metropolis over the model parameters.

use std::fmt;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::likelihood::{loglik, LikelihoodConfig};
use crate::models::{seeded_rng, DiffusionModel, ParamConstraint, TimeSeries};

/// Proposal draws allowed per positive component before giving up.
pub const RESAMPLE_CAP: usize = 10_000;

#[derive(Debug, Error)]
pub enum McmcError {
    #[error("parameter {0}: no positive proposal in {RESAMPLE_CAP} draws; step size is degenerate")]
    ResampleCap(usize),
    #[error("invalid proposal configuration: {0}")]
    InvalidProposal(String),
    #[error("log-likelihood at the initial parameters is not finite ({0})")]
    NonFiniteInitial(f64),
    #[error("initial parameters are outside the prior support")]
    InitialOutsideSupport,
    #[error("burn-in {burn_in} leaves no samples from a chain of length {len}")]
    EmptyWindow { burn_in: usize, len: usize },
    #[error("chain length must be at least 1")]
    EmptyChain,
    #[error("malformed chain csv at line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProposalConfig {
    pub step_sds: Vec<f64>,
    /// Components redrawn until positive.
    pub positivity: Vec<bool>,
}

impl ProposalConfig {
    pub fn new(step_sds: Vec<f64>, positivity: Vec<bool>) -> Result<Self, McmcError> {
        let cfg = ProposalConfig { step_sds, positivity };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Step sizes of 5% of `|theta0|`, at least `1e-4`.
    pub fn default_for(theta0: &[f64], positivity: Vec<bool>) -> Self {
        ProposalConfig {
            step_sds: theta0.iter().map(|t| (0.05 * t.abs()).max(1e-4)).collect(),
            positivity,
        }
    }

    /// Positivity flags taken from the model's parameter constraints.
    pub fn for_model(model: &DiffusionModel, step_sds: Vec<f64>) -> Result<Self, McmcError> {
        Self::new(step_sds, positivity_flags(model))
    }

    pub fn validate(&self) -> Result<(), McmcError> {
        if self.step_sds.len() != self.positivity.len() {
            return Err(McmcError::InvalidProposal(format!(
                "{} step sizes for {} parameters",
                self.step_sds.len(),
                self.positivity.len()
            )));
        }
        if let Some(s) = self.step_sds.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(McmcError::InvalidProposal(format!("step size {s} is not positive")));
        }
        Ok(())
    }
}

pub fn positivity_flags(model: &DiffusionModel) -> Vec<bool> {
    model
        .constraints()
        .iter()
        .map(|c| matches!(c, ParamConstraint::Positive))
        .collect()
}

/// Gaussian random-walk proposal; positivity-flagged components are redrawn
/// until positive.
pub fn propose<R: Rng + ?Sized>(theta_old: &[f64], cfg: &ProposalConfig, rng: &mut R) -> Result<Vec<f64>, McmcError> {
    theta_old
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            for _ in 0..RESAMPLE_CAP {
                let z: f64 = rng.sample(StandardNormal);
                let v = t + cfg.step_sds[i] * z;
                if !cfg.positivity[i] || v > 0.0 {
                    return Ok(v);
                }
            }
            Err(McmcError::ResampleCap(i))
        })
        .collect()
}

/// Metropolis-Hastings acceptance probability
/// `min(1, L' pi' q(old|new) / (L pi q(new|old)))` from log terms.
pub fn accept_ratio(
    loglik_new: f64,
    loglik_old: f64,
    logprior_new: f64,
    logprior_old: f64,
    logq_fwd: f64,
    logq_rev: f64,
) -> f64 {
    if loglik_new == f64::NEG_INFINITY || logprior_new == f64::NEG_INFINITY {
        return 0.0;
    }
    let log_r = (loglik_new - loglik_old) + (logprior_new - logprior_old) + (logq_rev - logq_fwd);
    if log_r.is_nan() {
        0.0
    } else {
        log_r.min(0.0).exp()
    }
}

/// Flat prior on a product of parameter supports.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatPrior {
    pub support: Vec<ParamConstraint>,
}

impl FlatPrior {
    pub fn for_model(model: &DiffusionModel) -> Self {
        FlatPrior {
            support: model.constraints().to_vec(),
        }
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        if theta.len() == self.support.len() && self.support.iter().zip(theta).all(|(c, &v)| c.admits(v)) {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub length: usize,
    pub proposal: ProposalConfig,
    pub prior: FlatPrior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub param_names: Vec<String>,
    pub samples: Vec<Vec<f64>>,
    /// `accepted[0]` is `true` for the initial state.
    pub accepted: Vec<bool>,
    pub loglik: Vec<f64>,
    pub seed: u64,
}

/// Runs a chain of `cfg.length` states (including `theta0`) against an
/// arbitrary log-likelihood.
pub fn run_chain_with<F: FnMut(&[f64]) -> f64>(
    mut log_lik: F,
    param_names: &[String],
    theta0: &[f64],
    cfg: &ChainConfig,
    seed: u64,
) -> Result<Chain, McmcError> {
    cfg.proposal.validate()?;
    if cfg.length == 0 {
        return Err(McmcError::EmptyChain);
    }
    if cfg.proposal.step_sds.len() != theta0.len() {
        return Err(McmcError::InvalidProposal(format!(
            "{} step sizes for {} parameters",
            cfg.proposal.step_sds.len(),
            theta0.len()
        )));
    }
    let mut lp = cfg.prior.log_density(theta0);
    if lp == f64::NEG_INFINITY {
        return Err(McmcError::InitialOutsideSupport);
    }
    let mut ll = log_lik(theta0);
    if !ll.is_finite() {
        return Err(McmcError::NonFiniteInitial(ll));
    }
    let mut rng = seeded_rng(seed, 0);
    let mut theta = theta0.to_vec();
    let mut chain = Chain {
        param_names: param_names.to_vec(),
        samples: Vec::with_capacity(cfg.length),
        accepted: Vec::with_capacity(cfg.length),
        loglik: Vec::with_capacity(cfg.length),
        seed,
    };
    chain.samples.push(theta.clone());
    chain.accepted.push(true);
    chain.loglik.push(ll);
    for _ in 1..cfg.length {
        let cand = propose(&theta, &cfg.proposal, &mut rng)?;
        let lp_new = cfg.prior.log_density(&cand);
        let ll_new = if lp_new == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            log_lik(&cand)
        };
        let r = accept_ratio(ll_new, ll, lp_new, lp, 0.0, 0.0);
        let u: f64 = rng.random();
        let accept = u < r;
        if accept {
            theta = cand;
            ll = ll_new;
            lp = lp_new;
        }
        chain.samples.push(theta.clone());
        chain.accepted.push(accept);
        chain.loglik.push(ll);
    }
    Ok(chain)
}

/// Chain over a model's parameters with the saddlepoint likelihood.
pub fn run_chain(
    model: &DiffusionModel,
    series: &TimeSeries,
    theta0: &[f64],
    lik: &LikelihoodConfig,
    cfg: &ChainConfig,
    seed: u64,
) -> Result<Chain, McmcError> {
    run_chain_with(|th| loglik(model, series, th, lik), model.param_names(), theta0, cfg, seed)
}

impl Chain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Fraction of proposals accepted (the initial state excluded).
    pub fn acceptance_rate(&self) -> f64 {
        if self.len() < 2 {
            return 0.0;
        }
        self.accepted[1..].iter().filter(|&&a| a).count() as f64 / (self.len() - 1) as f64
    }

    /// Post-burn-in draws of parameter `k`.
    pub fn marginal(&self, k: usize, burn_in: usize) -> Vec<f64> {
        self.samples.iter().skip(burn_in).map(|s| s[k]).collect()
    }

    /// CSV with columns `step, <params...>, loglik, accepted`.
    pub fn to_writer<W: Write>(&self, writer: W) -> Result<(), McmcError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["step".to_string()];
        header.extend(self.param_names.iter().cloned());
        header.push("loglik".into());
        header.push("accepted".into());
        w.write_record(&header).map_err(csv_err)?;
        for (i, s) in self.samples.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(s.iter().map(f64::to_string));
            row.push(self.loglik[i].to_string());
            row.push(u8::from(self.accepted[i]).to_string());
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a chain dump written by [`Chain::to_writer`]. The seed is not
    /// stored in the file and is set to 0.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, McmcError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers().map_err(csv_err)?.clone();
        let n = header.len();
        if n < 3 || &header[0] != "step" || &header[n - 2] != "loglik" || &header[n - 1] != "accepted" {
            return Err(McmcError::Malformed {
                line: 1,
                message: "expected header step,<params>,loglik,accepted".into(),
            });
        }
        let param_names: Vec<String> = header.iter().skip(1).take(n - 3).map(String::from).collect();
        let mut chain = Chain {
            param_names,
            samples: Vec::new(),
            accepted: Vec::new(),
            loglik: Vec::new(),
            seed: 0,
        };
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |m: &str| McmcError::Malformed {
                line,
                message: m.to_string(),
            };
            let nums: Vec<f64> = rec
                .iter()
                .take(n - 1)
                .map(|f| f.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad("non-numeric field"))?;
            chain.samples.push(nums[1..n - 2].to_vec());
            chain.loglik.push(nums[n - 2]);
            chain.accepted.push(match &rec[n - 1] {
                "1" => true,
                "0" => false,
                _ => return Err(bad("accepted must be 0 or 1")),
            });
        }
        Ok(chain)
    }
}

fn csv_err(e: csv::Error) -> McmcError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => McmcError::Io(io),
        other => McmcError::Malformed {
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Empirical quantile with Hyndman-Fan type 6 interpolation (position
/// `(n + 1) p`). `sorted` must be ascending and non-empty.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n as f64 + 1.0) * p;
    if h <= 1.0 {
        return sorted[0];
    }
    if h >= n as f64 {
        return sorted[n - 1];
    }
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    sorted[lo - 1] + frac * (sorted[lo] - sorted[lo - 1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub param_names: Vec<String>,
    pub medians: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    /// Credibility level `1 - alpha`.
    pub level: f64,
    pub acceptance_rate: f64,
    pub samples_used: usize,
}

/// Medians and equal-tailed `1 - alpha` intervals of the draws after
/// `burn_in`.
pub fn summarize(chain: &Chain, burn_in: usize, alpha: f64) -> Result<PosteriorSummary, McmcError> {
    if burn_in >= chain.len() {
        return Err(McmcError::EmptyWindow {
            burn_in,
            len: chain.len(),
        });
    }
    let p = chain.samples[0].len();
    let mut medians = Vec::with_capacity(p);
    let mut ci_lo = Vec::with_capacity(p);
    let mut ci_hi = Vec::with_capacity(p);
    for k in 0..p {
        let mut xs = chain.marginal(k, burn_in);
        xs.sort_by(f64::total_cmp);
        medians.push(quantile(&xs, 0.5));
        ci_lo.push(quantile(&xs, alpha / 2.0));
        ci_hi.push(quantile(&xs, 1.0 - alpha / 2.0));
    }
    Ok(PosteriorSummary {
        param_names: chain.param_names.clone(),
        medians,
        ci_lo,
        ci_hi,
        level: 1.0 - alpha,
        acceptance_rate: chain.acceptance_rate(),
        samples_used: chain.len() - burn_in,
    })
}

impl PosteriorSummary {
    /// Whether each interval contains the matching component of `theta`.
    pub fn covers(&self, theta: &[f64]) -> Vec<bool> {
        theta
            .iter()
            .enumerate()
            .map(|(k, &t)| self.ci_lo[k] <= t && t <= self.ci_hi[k])
            .collect()
    }

    /// CSV with columns `parameter, median, ci_lo, ci_hi, level,
    /// acceptance_rate, samples_used`; the last three repeat on every row.
    pub fn to_writer<W: Write>(&self, writer: W) -> Result<(), McmcError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
        for k in 0..self.medians.len() {
            w.write_record([
                self.param_names.get(k).cloned().unwrap_or_else(|| format!("p{k}")),
                self.medians[k].to_string(),
                self.ci_lo[k].to_string(),
                self.ci_hi[k].to_string(),
                self.level.to_string(),
                self.acceptance_rate.to_string(),
                self.samples_used.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a summary written by [`PosteriorSummary::to_writer`].
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, McmcError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers().map_err(csv_err)?.clone();
        if header.iter().ne(SUMMARY_HEADER) {
            return Err(McmcError::Malformed {
                line: 1,
                message: format!("expected header {}", SUMMARY_HEADER.join(",")),
            });
        }
        let mut s = PosteriorSummary {
            param_names: Vec::new(),
            medians: Vec::new(),
            ci_lo: Vec::new(),
            ci_hi: Vec::new(),
            level: f64::NAN,
            acceptance_rate: f64::NAN,
            samples_used: 0,
        };
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = || McmcError::Malformed {
                line,
                message: "non-numeric field".into(),
            };
            let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad());
            s.param_names.push(rec[0].to_string());
            s.medians.push(num(1)?);
            s.ci_lo.push(num(2)?);
            s.ci_hi.push(num(3)?);
            s.level = num(4)?;
            s.acceptance_rate = num(5)?;
            s.samples_used = rec[6].parse().map_err(|_| bad())?;
        }
        Ok(s)
    }
}

const SUMMARY_HEADER: [&str; 7] = [
    "parameter",
    "median",
    "ci_lo",
    "ci_hi",
    "level",
    "acceptance_rate",
    "samples_used",
];

impl fmt::Display for PosteriorSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pct = self.level * 100.0;
        writeln!(f, "{:<10} {:>14} {:>14} {:>14}", "parameter", "median", format!("{pct:.0}% lo"), format!("{pct:.0}% hi"))?;
        for k in 0..self.medians.len() {
            let name = self.param_names.get(k).map_or("?", String::as_str);
            writeln!(
                f,
                "{:<10} {:>14.6} {:>14.6} {:>14.6}",
                name, self.medians[k], self.ci_lo[k], self.ci_hi[k]
            )?;
        }
        write!(
            f,
            "acceptance rate {:.3} over {} post-burn-in samples",
            self.acceptance_rate, self.samples_used
        )
    }
}
