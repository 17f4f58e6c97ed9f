use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use saddlefit::evalstats::{
    coverage_study, default_domain, integrated_error, saddle_transition_density, transition_accuracy,
    CoverageConfig, EvalError, Generator, StudyLikelihood,
};
use saddlefit::likelihood::{loglik_report, LikelihoodConfig};
use saddlefit::mcmc::{positivity_flags, run_chain, summarize, Chain, ChainConfig, FlatPrior, McmcError, ProposalConfig};
use saddlefit::models::{
    seeded_rng, simulate_cir_exact, simulate_path, true_transition_density, DiffusionModel, ModelError, ModelKind,
    SeriesError, TimeSeries,
};
use saddlefit::IntegratorConfig;

use crate::args::{
    ChainArgs, Command, CompareArgs, CoverageArgs, DensityArgs, DeriveArgs, FitArgs, GeneratorKind, LikelihoodKind,
    SimulateArgs,
};
use crate::CliError;

pub fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Derive(a) => derive(a),
        Command::Simulate(a) => simulate(a),
        Command::Density(a) => density(a),
        Command::Fit(a) => fit(a),
        Command::Coverage(a) => coverage(a),
        Command::Compare(a) => compare(a),
    }
}

fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

fn other(e: impl ToString) -> CliError {
    CliError::Other(e.to_string())
}

fn data(e: SeriesError) -> CliError {
    match e {
        SeriesError::Io(_) => CliError::Other(e.to_string()),
        _ => CliError::Data(e.to_string()),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| other(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn model_of(kind: ModelKind) -> Arc<DiffusionModel> {
    Arc::new(DiffusionModel::new(kind))
}

/// Validates the order by deriving (and caching) the system.
fn checked_order(model: &DiffusionModel, order: Option<u32>) -> Result<u32, CliError> {
    let n = order.unwrap_or_else(|| model.default_order());
    model.ode_system(n).map_err(usage)?;
    Ok(n)
}

fn likelihood_config(model: &DiffusionModel, chain: &ChainArgs) -> Result<LikelihoodConfig, CliError> {
    let mut cfg = LikelihoodConfig::new(checked_order(model, chain.order)?);
    let d = IntegratorConfig::default();
    cfg.integrator = IntegratorConfig::new(
        chain.rel_tol.unwrap_or(d.rel_tol),
        chain.abs_tol.unwrap_or(d.abs_tol),
        d.max_steps,
    )
    .map_err(usage)?;
    Ok(cfg)
}

fn proposal(model: &DiffusionModel, steps: Option<&[f64]>, theta0: &[f64]) -> Result<ProposalConfig, CliError> {
    match steps {
        Some(s) => ProposalConfig::for_model(model, s.to_vec()).map_err(usage),
        None => Ok(ProposalConfig::default_for(theta0, positivity_flags(model))),
    }
}

fn burn_in(chain: &ChainArgs) -> Result<usize, CliError> {
    let b = chain.burn_in.unwrap_or(chain.chain_length / 2);
    if b >= chain.chain_length {
        return Err(usage(format!("burn-in {b} leaves no samples from a chain of {}", chain.chain_length)));
    }
    Ok(b)
}

fn check_level(level: f64) -> Result<(), CliError> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(usage(format!("level {level} outside (0, 1)")))
    }
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(other)
}

fn derive(a: DeriveArgs) -> Result<(), CliError> {
    let model = model_of(a.model.model);
    let n = checked_order(&model, a.order)?;
    let sys = model.ode_system(n).map_err(usage)?;
    let mut out = output(None)?;
    for line in sys.render() {
        writeln!(out, "{line}").map_err(other)?;
    }
    out.flush().map_err(other)
}

fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let model = model_of(a.model.model);
    let inst = model.build(&a.theta).map_err(usage)?;
    if a.x0.len() != model.dim() || !model.state_admissible(&a.x0) {
        return Err(usage(ModelError::InvalidState(a.x0.clone())));
    }
    if !(a.dt > 0.0) {
        return Err(usage(ModelError::NonPositiveStep(a.dt)));
    }
    if a.points == 0 {
        return Err(usage("need at least one point"));
    }
    let times: Vec<f64> = (0..a.points).map(|i| i as f64 * a.dt).collect();
    let mut rng = seeded_rng(a.seed, 1);
    let series = match a.generator {
        GeneratorKind::Euler => simulate_path(&inst, &a.x0, &times, a.substeps, &mut rng),
        GeneratorKind::Exact if model.kind() == ModelKind::Cir => {
            simulate_cir_exact(&a.theta, a.x0[0], &times, &mut rng)
        }
        GeneratorKind::Exact => return Err(usage("exact generator is CIR only")),
    }
    .map_err(other)?;
    series.to_writer(output(a.out.as_deref())?).map_err(other)
}

fn density(a: DensityArgs) -> Result<(), CliError> {
    let model = model_of(a.model.model);
    if model.dim() != 1 {
        return Err(usage("density is tabulated for scalar models only"));
    }
    model.check_params(&a.theta).map_err(usage)?;
    if !model.state_admissible(&[a.x0]) {
        return Err(usage(ModelError::InvalidState(vec![a.x0])));
    }
    if !(a.dt > 0.0) {
        return Err(usage(ModelError::NonPositiveStep(a.dt)));
    }
    if a.points < 2 {
        return Err(usage("need at least two grid points"));
    }
    let n = checked_order(&model, a.order)?;
    let eval = |e: EvalError| other(e);
    let (dlo, dhi) = default_domain(&model, &a.theta, a.x0, a.dt).map_err(eval)?;
    let (lo, hi) = (a.lo.unwrap_or(dlo), a.hi.unwrap_or(dhi));
    if !(hi > lo) {
        return Err(usage(format!("empty grid [{lo}, {hi}]")));
    }
    let saddle = saddle_transition_density(&model, &a.theta, a.x0, a.dt, n).map_err(eval)?;
    let gauss = saddle_transition_density(&model, &a.theta, a.x0, a.dt, 2).map_err(eval)?;
    let exact = model.kind().has_exact_density();

    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    let mut header = vec!["x", "saddle", "gaussian"];
    if exact {
        header.push("exact");
    }
    w.write_record(&header).map_err(other)?;
    for i in 0..a.points {
        let x = lo + (hi - lo) * i as f64 / (a.points - 1) as f64;
        let mut row = vec![x.to_string(), saddle(x).to_string(), gauss(x).to_string()];
        if exact {
            let f = true_transition_density(&model, &a.theta, a.x0, x, a.dt).map_err(other)?;
            row.push(f.to_string());
        }
        w.write_record(&row).map_err(other)?;
    }
    w.flush().map_err(other)
}

fn indexed_path(path: &Path, k: usize) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "chain".into(), |s| s.to_string_lossy().into_owned());
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{k}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{k}"),
    };
    path.with_file_name(name)
}

/// Post-burn-in draws of several chains, concatenated.
fn pooled(chains: &[Chain], burn_in: usize) -> Chain {
    let mut out = Chain {
        param_names: chains[0].param_names.clone(),
        samples: Vec::new(),
        accepted: Vec::new(),
        loglik: Vec::new(),
        seed: chains[0].seed,
    };
    for c in chains {
        out.samples.extend_from_slice(&c.samples[burn_in..]);
        out.accepted.extend_from_slice(&c.accepted[burn_in..]);
        out.loglik.extend_from_slice(&c.loglik[burn_in..]);
    }
    out
}

fn fit(a: FitArgs) -> Result<(), CliError> {
    let model = model_of(a.model.model);
    let mut series = TimeSeries::read_csv(&a.data).map_err(data)?;
    series.check_usable(model.dim()).map_err(data)?;
    if let Some(scale) = a.vix_scale {
        if model.kind() != ModelKind::Heston {
            return Err(usage("--vix-scale applies to the heston model only"));
        }
        if !(scale > 0.0) {
            return Err(usage(format!("vix scale must be positive, got {scale}")));
        }
        let values = series.values().iter().map(|v| vec![v[0], v[1] * scale]).collect();
        series = TimeSeries::new(series.times().to_vec(), values).map_err(data)?;
    }
    model.check_params(&a.theta0).map_err(usage)?;
    check_level(a.chain.level)?;
    let burn = burn_in(&a.chain)?;
    if a.chains == 0 {
        return Err(usage("need at least one chain"));
    }
    let lik = likelihood_config(&model, &a.chain)?;

    let report = loglik_report(&model, &series, &a.theta0, &lik).map_err(usage)?;
    if !report.value.is_finite() {
        return Err(CliError::Likelihood(format!(
            "log-likelihood at theta0 is {} ({} of {} transitions failed)",
            report.value,
            report.failures(),
            series.len() - 1
        )));
    }
    if report.fallbacks() > 0 {
        eprintln!(
            "note: {} of {} transitions at theta0 used the Gaussian fallback",
            report.fallbacks(),
            series.len() - 1
        );
    }

    let cfg = ChainConfig {
        length: a.chain.chain_length,
        proposal: proposal(&model, a.chain.steps.as_deref(), &a.theta0)?,
        prior: FlatPrior::for_model(&model),
    };
    let pool = thread_pool(a.chain.jobs)?;
    let chains: Vec<Result<Chain, McmcError>> = pool.install(|| {
        (0..a.chains)
            .into_par_iter()
            .map(|k| run_chain(&model, &series, &a.theta0, &lik, &cfg, a.chain.seed.wrapping_add(k as u64)))
            .collect()
    });
    let chains: Vec<Chain> = chains.into_iter().collect::<Result<_, _>>().map_err(|e| match e {
        McmcError::NonFiniteInitial(_) => CliError::Likelihood(e.to_string()),
        McmcError::ResampleCap(_) | McmcError::InvalidProposal(_) | McmcError::InitialOutsideSupport => usage(e),
        _ => other(e),
    })?;

    if let Some(path) = &a.chain_out {
        for (k, c) in chains.iter().enumerate() {
            let p = if chains.len() == 1 { path.clone() } else { indexed_path(path, k) };
            c.to_writer(output(Some(&p))?).map_err(other)?;
        }
    }
    let alpha = 1.0 - a.chain.level;
    let summary = if chains.len() == 1 {
        summarize(&chains[0], burn, alpha)
    } else {
        summarize(&pooled(&chains, burn), 0, alpha)
    }
    .map_err(other)?;
    match &a.summary_out {
        Some(p) => summary.to_writer(output(Some(p))?).map_err(other)?,
        None => println!("{summary}"),
    }
    if a.summary_out.is_some() || chains.len() > 1 {
        for c in &chains {
            eprintln!("chain seed {}: acceptance rate {:.3}", c.seed, c.acceptance_rate());
        }
    }
    Ok(())
}

fn coverage(a: CoverageArgs) -> Result<(), CliError> {
    let model = model_of(a.model.model);
    model.check_params(&a.theta).map_err(usage)?;
    model.check_params(&a.theta0).map_err(usage)?;
    if a.x0.len() != model.dim() || !model.state_admissible(&a.x0) {
        return Err(usage(ModelError::InvalidState(a.x0.clone())));
    }
    check_level(a.chain.level)?;
    let likelihood = match a.likelihood {
        LikelihoodKind::Saddle => StudyLikelihood::Saddlepoint(likelihood_config(&model, &a.chain)?),
        LikelihoodKind::Exact if model.kind().has_exact_density() => StudyLikelihood::Exact,
        LikelihoodKind::Exact => return Err(usage(ModelError::NoExactDensity(model.kind()))),
    };
    let generator = match a.generator {
        GeneratorKind::Euler => Generator::EulerMaruyama { substeps: a.substeps },
        GeneratorKind::Exact if model.kind() == ModelKind::Cir => Generator::ExactCir,
        GeneratorKind::Exact => return Err(usage("exact generator is CIR only")),
    };
    let cfg = CoverageConfig {
        theta_true: a.theta.clone(),
        theta0: Some(a.theta0.clone()),
        replicates: a.replicates,
        series_length: a.length,
        x0: a.x0.clone(),
        dt: a.dt,
        chain_length: a.chain.chain_length,
        burn_in: burn_in(&a.chain)?,
        level: a.chain.level,
        step_sds: proposal(&model, a.chain.steps.as_deref(), &a.theta0)?.step_sds,
        likelihood,
        generator,
        seed: a.chain.seed,
        jobs: a.chain.jobs,
    };
    let report = coverage_study(&model, &cfg).map_err(|e| match e {
        EvalError::Config(_) | EvalError::Model(_) => usage(e),
        _ => other(e),
    })?;
    match &a.out {
        Some(p) => report.to_writer(output(Some(p))?).map_err(other)?,
        None => println!("{report}"),
    }
    for o in &report.outcomes {
        if let Err(e) = &o.result {
            eprintln!("replicate {} (seed {}) failed: {e}", o.index, o.seed);
        }
    }
    Ok(())
}

struct Sweep {
    param: usize,
    values: Vec<f64>,
}

fn parse_sweep(model: &DiffusionModel, spec: &str) -> Result<Sweep, CliError> {
    let bad = || usage(format!("sweep `{spec}`: expected name=lo:hi:count"));
    let (name, range) = spec.split_once('=').ok_or_else(bad)?;
    let param = model
        .param_names()
        .iter()
        .position(|p| p == name.trim())
        .ok_or_else(|| usage(format!("model {} has no parameter `{}`", model.kind(), name.trim())))?;
    let parts: Vec<&str> = range.split(':').collect();
    let [lo, hi, count] = parts[..] else {
        return Err(bad());
    };
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    let count: usize = count.trim().parse().map_err(|_| bad())?;
    if count == 0 || !lo.is_finite() || !hi.is_finite() {
        return Err(bad());
    }
    let values = if count == 1 {
        vec![lo]
    } else {
        (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect()
    };
    Ok(Sweep { param, values })
}

fn compare(a: CompareArgs) -> Result<(), CliError> {
    let model = model_of(a.model.model);
    if !model.kind().has_exact_density() {
        return Err(usage(ModelError::NoExactDensity(model.kind())));
    }
    model.check_params(&a.theta).map_err(usage)?;
    if !model.state_admissible(&[a.x0]) {
        return Err(usage(ModelError::InvalidState(vec![a.x0])));
    }
    let n = checked_order(&model, a.order)?;
    let sweeps: Vec<Sweep> = a.sweep.iter().map(|s| parse_sweep(&model, s)).collect::<Result<_, _>>()?;
    if let Some(dt) = a.dt_sweep.iter().copied().chain([a.dt]).find(|d| !(*d > 0.0)) {
        return Err(usage(ModelError::NonPositiveStep(dt)));
    }
    let eval = |e: EvalError| match e {
        EvalError::Model(_) => usage(e),
        _ => other(e),
    };

    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    w.write_record(["sweep", "parameter", "value", "dt", "ie_saddle", "ie_gaussian"]).map_err(other)?;
    let row = |w: &mut csv::Writer<_>, sweep: &str, param: &str, value: Option<f64>, dt: f64, s: f64, g: f64| {
        let value = value.map_or_else(String::new, |v| v.to_string());
        w.write_record([sweep, param, &value, &dt.to_string(), &s.to_string(), &g.to_string()])
            .map_err(other)
    };

    let exact = |x: f64| true_transition_density(&model, &a.theta, a.x0, x, a.dt).unwrap_or(0.0);
    let domain = default_domain(&model, &a.theta, a.x0, a.dt).map_err(eval)?;
    let ie_self = integrated_error(exact, exact, domain).map_err(eval)?;
    row(&mut w, "self", "", None, a.dt, ie_self, ie_self)?;

    let base = transition_accuracy(&model, &a.theta, a.x0, a.dt, n).map_err(eval)?;
    row(&mut w, "baseline", "", None, a.dt, base.ie_saddle, base.ie_gaussian)?;

    for s in &sweeps {
        let name = &model.param_names()[s.param];
        for &v in &s.values {
            let mut theta = a.theta.clone();
            theta[s.param] = v;
            let acc = transition_accuracy(&model, &theta, a.x0, a.dt, n).map_err(eval)?;
            row(&mut w, "parameter", name, Some(v), a.dt, acc.ie_saddle, acc.ie_gaussian)?;
        }
    }
    for &dt in &a.dt_sweep {
        let acc = transition_accuracy(&model, &a.theta, a.x0, dt, n).map_err(eval)?;
        row(&mut w, "dt", "dt", Some(dt), dt, acc.ie_saddle, acc.ie_gaussian)?;
    }
    w.flush().map_err(other)
}
