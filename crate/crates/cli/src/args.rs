//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use efficiency::{FnMode, Sampling, WeightDist};

use crate::grid::Grid;
use crate::output::Format;

#[derive(Debug, Parser)]
#[command(name = "efficiency", version, about = "Efficiency intervals, variance tables, coverage scans and simulation studies")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: Format,
    /// Write to this file instead of standard output.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Seed for Monte-Carlo work.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads, 0 = one per core. Does not change the output.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Confidence interval for one measurement.
    Interval(IntervalArgs),
    /// Table of the Poisson-trials variance correction f(n).
    FnTable(FnTableArgs),
    /// Coverage of interval methods over a (p, n) grid.
    Coverage(CoverageArgs),
    /// Monte-Carlo studies of the variance formulas.
    #[command(subcommand)]
    Simulate(Study),
}

#[derive(Debug, Args)]
pub struct IntervalArgs {
    /// wilson, wilson-poisson[:MODE], clopper-pearson, normal, bayesian-uniform,
    /// bayesian-jeffreys, wilson-weighted or wilson-extra.
    #[arg(long)]
    pub method: String,
    #[arg(long, default_value_t = 0.6827, value_parser = parse_level)]
    pub level: f64,
    /// Successes.
    #[arg(long)]
    pub k: Option<u64>,
    /// Trials.
    #[arg(long)]
    pub n: Option<u64>,
    /// f(n) evaluation for wilson-poisson: exact[:TOL], large-n, small-n, blend, unity.
    #[arg(long)]
    pub fn_mode: Option<FnMode>,
    /// Event file with header `weight,success[,x]` (wilson-weighted).
    #[arg(long, conflicts_with_all = ["p_hat", "n_eff"])]
    pub events: Option<PathBuf>,
    /// Weighted estimate (wilson-weighted summary input).
    #[arg(long, requires = "n_eff")]
    pub p_hat: Option<f64>,
    /// Effective count (wilson-weighted summary input).
    #[arg(long, requires = "p_hat")]
    pub n_eff: Option<f64>,
    /// Success count estimate (wilson-extra).
    #[arg(long)]
    pub n1: Option<f64>,
    /// Failure count estimate (wilson-extra).
    #[arg(long)]
    pub n2: Option<f64>,
    /// Variance of n1 (wilson-extra).
    #[arg(long)]
    pub var1: Option<f64>,
    /// Variance of n2 (wilson-extra).
    #[arg(long)]
    pub var2: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FnTableArgs {
    /// Values of n: `a,b,c` or `lo:hi:count[:lin|log]`.
    #[arg(long, default_value = "0.1:100:400:log")]
    pub n_grid: Grid,
    /// Relative tolerance of the exact summation.
    #[arg(long, default_value_t = FnMode::DEFAULT_EXACT_TOL)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    /// Comma-separated methods; wilson-weighted and wilson-extra are simulated.
    #[arg(long, required = true, value_delimiter = ',')]
    pub method: Vec<String>,
    #[arg(long, default_value = "0.005:0.995:100")]
    pub p_grid: Grid,
    #[arg(long)]
    pub n_grid: Grid,
    #[arg(long, default_value_t = 0.6827, value_parser = parse_level)]
    pub level: f64,
    /// Distribution of the total count. Simulated methods always use poisson.
    #[arg(long, default_value = "poisson")]
    pub sampling: Sampling,
    /// Emit the coverage averaged over p in [0, 1] for each n instead of per-cell values.
    #[arg(long)]
    pub average: bool,
    /// Midpoint cells for `--average`.
    #[arg(long, default_value_t = efficiency::coverage::DEFAULT_AVERAGE_GRID)]
    pub average_grid: usize,
    /// Replicates per cell for simulated methods.
    #[arg(long)]
    pub reps: Option<u64>,
    /// Weight distribution for wilson-weighted: const:W, exp:MEAN, normal:MEAN,SD, uniform:LO,HI.
    #[arg(long)]
    pub dist: Option<WeightDist>,
    /// Extra variance per count as a fraction of n, for wilson-extra.
    #[arg(long)]
    pub bkg: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Study {
    /// Variance of the weighted estimate against the weighted-sample formulas.
    Weighted(WeightedArgs),
    /// Covariate-dependent weights and efficiency: bias and variance estimates.
    Xdep(XdepArgs),
    /// Counts with extra fluctuations: variance formula and interval coverage.
    Extra(ExtraArgs),
}

#[derive(Debug, Args)]
pub struct WeightedArgs {
    /// Weight distribution, repeatable: const:W, exp:MEAN, normal:MEAN,SD, uniform:LO,HI.
    #[arg(long, required = true)]
    pub dist: Vec<WeightDist>,
    /// Mean number of events.
    #[arg(long, value_parser = parse_positive)]
    pub n: f64,
    #[arg(long, value_parser = parse_probability)]
    pub p: f64,
    #[arg(long)]
    pub reps: u64,
}

#[derive(Debug, Args)]
pub struct XdepArgs {
    /// Mean number of events, a grid spec.
    #[arg(long)]
    pub n: Grid,
    #[arg(long)]
    pub reps: u64,
    /// weight-bias (p = x, w = x^3, x uniform) or const:P,W.
    #[arg(long, default_value = "weight-bias")]
    pub scenario: String,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long, default_value_t = 100)]
    pub bootstrap_replicas: usize,
    /// Leading replicates on which the bootstrap is evaluated.
    #[arg(long, default_value_t = 200)]
    pub bootstrap_samples: u64,
    /// Only the mean estimate per n, without variance estimates.
    #[arg(long)]
    pub bias_only: bool,
}

#[derive(Debug, Args)]
pub struct ExtraArgs {
    /// Mean total count.
    #[arg(long, value_parser = parse_positive)]
    pub n: f64,
    /// Extra variance per count as a fraction of n.
    #[arg(long)]
    pub bkg: f64,
    #[arg(long, default_value = "0.1:0.9:9")]
    pub p_grid: Grid,
    #[arg(long)]
    pub reps: u64,
    #[arg(long, default_value_t = 0.6827, value_parser = parse_level)]
    pub level: f64,
}

fn parse_level(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 0.0 && x < 1.0 => Ok(x),
        _ => Err(format!("level must lie in (0, 1), got `{s}`")),
    }
}

fn parse_probability(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if (0.0..=1.0).contains(&x) => Ok(x),
        _ => Err(format!("probability must lie in [0, 1], got `{s}`")),
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
        _ => Err(format!("expected a positive number, got `{s}`")),
    }
}
