use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use saddlefit::models::ModelKind;

#[derive(Debug, Parser)]
#[command(
    name = "saddlefit",
    version,
    about = "Saddlepoint likelihoods and MCMC for polynomial diffusions",
    args_override_self = true
)]
pub struct Cli {
    /// key=value file supplying defaults for the subcommand's flags
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the cumulant ODE system of a model
    Derive(DeriveArgs),
    /// Simulate a time series by Euler-Maruyama (or exactly, for CIR)
    Simulate(SimulateArgs),
    /// Tabulate one transition density on a grid
    Density(DensityArgs),
    /// Fit a model to a CSV series by random-walk Metropolis
    Fit(FitArgs),
    /// Coverage of credibility intervals over simulated replicates
    Coverage(CoverageArgs),
    /// Integrated Error of saddlepoint and Gaussian densities against the exact one
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// cir, gbm, bm, ou, bivariate or heston
    #[arg(long)]
    pub model: ModelKind,
}

#[derive(Debug, Args)]
pub struct DeriveArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// Truncation order (default 4 univariate, 3 bivariate)
    #[arg(long)]
    pub order: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeneratorKind {
    Euler,
    Exact,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// Parameter vector, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub theta: Vec<f64>,
    /// Initial state, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub x0: Vec<f64>,
    /// Observation interval
    #[arg(long)]
    pub dt: f64,
    /// Number of observations including the initial state
    #[arg(long, short = 'n')]
    pub points: usize,
    /// Euler-Maruyama steps per interval
    #[arg(long, default_value_t = saddlefit::models::DEFAULT_SUBSTEPS)]
    pub substeps: usize,
    #[arg(long, value_enum, default_value_t = GeneratorKind::Euler)]
    pub generator: GeneratorKind,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output CSV (stdout when absent)
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub theta: Vec<f64>,
    /// Conditioning state
    #[arg(long, allow_hyphen_values = true)]
    pub x0: f64,
    #[arg(long)]
    pub dt: f64,
    #[arg(long)]
    pub order: Option<u32>,
    /// Grid bounds; default is +/- 12 predicted standard deviations
    #[arg(long, allow_hyphen_values = true)]
    pub lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub hi: Option<f64>,
    #[arg(long, default_value_t = 201)]
    pub points: usize,
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    /// Proposal standard deviations, comma separated (default 5% of |theta0|)
    #[arg(long, value_delimiter = ',')]
    pub steps: Option<Vec<f64>>,
    #[arg(long)]
    pub order: Option<u32>,
    #[arg(long, default_value_t = 20_000)]
    pub chain_length: usize,
    /// Default: half the chain
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Credibility level
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Cumulant ODE relative tolerance
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// Cumulant ODE absolute tolerance
    #[arg(long)]
    pub abs_tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// Observations, header `t,x1[,x2]`
    #[arg(long)]
    pub data: PathBuf,
    /// Starting parameters, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub theta0: Vec<f64>,
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Independent chains, seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Heston only: multiply the variance column by this factor before fitting
    #[arg(long)]
    pub vix_scale: Option<f64>,
    /// Chain dump CSV; with several chains the chain index is added to the name
    #[arg(long)]
    pub chain_out: Option<PathBuf>,
    /// Posterior summary CSV (stdout table when absent)
    #[arg(long)]
    pub summary_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LikelihoodKind {
    Saddle,
    Exact,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// Generating parameters
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub theta: Vec<f64>,
    /// Chain starting parameters
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub theta0: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    /// Observations per replicate series
    #[arg(long, default_value_t = 40)]
    pub length: usize,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub x0: Vec<f64>,
    #[arg(long)]
    pub dt: f64,
    #[arg(long, default_value_t = saddlefit::models::DEFAULT_SUBSTEPS)]
    pub substeps: usize,
    #[arg(long, value_enum, default_value_t = GeneratorKind::Euler)]
    pub generator: GeneratorKind,
    #[arg(long, value_enum, default_value_t = LikelihoodKind::Saddle)]
    pub likelihood: LikelihoodKind,
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Coverage CSV (stdout table when absent)
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub theta: Vec<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: f64,
    /// Baseline observation interval
    #[arg(long)]
    pub dt: f64,
    #[arg(long)]
    pub order: Option<u32>,
    /// Parameter sweep `name=lo:hi:count`, repeatable
    #[arg(long, value_name = "NAME=LO:HI:COUNT")]
    pub sweep: Vec<String>,
    /// Observation intervals for the time-step sweep
    #[arg(long, value_delimiter = ',', default_values_t = [1.0 / 52.0, 1.0 / 12.0, 0.25, 0.5])]
    pub dt_sweep: Vec<f64>,
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
}
