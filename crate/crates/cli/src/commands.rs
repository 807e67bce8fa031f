//! Subcommand bodies. Each returns a complete [`OutputRecord`].

use std::fs::File;

use efficiency::coverage::MIN_AVERAGE_GRID;
use efficiency::{
    average_coverage, bias_curve, f_approx, f_exact, f_large_n, f_small_n, scan_grid, scan_grid_mc,
    simulate_extra, simulate_weighted_variance, simulate_xdep, wilson_extra, wilson_weighted, CoverageCell,
    EfficiencyCounts, ExtraFluctuationInputs64, Interval64, McMethod, Method, RngStream, ScenarioExtra,
    WeightedEstimate64, XdepConfig, XdepScenario,
};
use rayon::prelude::*;

use crate::args::{Command, CoverageArgs, ExtraArgs, FnTableArgs, IntervalArgs, Study, WeightedArgs, XdepArgs};
use crate::events::read_events;
use crate::output::{Cell, Metadata, OutputRecord};
use crate::CliError;

pub fn execute(command: &Command, meta: Metadata, seed: u64) -> Result<OutputRecord, CliError> {
    match command {
        Command::Interval(a) => interval(a, meta),
        Command::FnTable(a) => fn_table(a, meta),
        Command::Coverage(a) => coverage(a, meta, seed),
        Command::Simulate(Study::Weighted(a)) => simulate_weighted(a, meta, seed),
        Command::Simulate(Study::Xdep(a)) => simulate_xdep_cmd(a, meta, seed),
        Command::Simulate(Study::Extra(a)) => simulate_extra_cmd(a, meta, seed),
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub const INTERVAL_COLUMNS: [&str; 13] =
    ["method", "k", "n", "p_hat", "n_eff", "n1", "n2", "var1", "var2", "lower", "upper", "level", "clipped"];

fn interval(a: &IntervalArgs, meta: Metadata) -> Result<OutputRecord, CliError> {
    let mut rec = OutputRecord::new(meta, INTERVAL_COLUMNS.to_vec());
    let tail = |method: String, iv: &Interval64| [method.into(), iv.lower.into(), iv.upper.into(), iv.level.into(), iv.clipped.into()];
    match a.method.as_str() {
        "wilson-weighted" => {
            let est = match (&a.events, a.p_hat, a.n_eff) {
                (Some(path), _, _) => {
                    let file = File::open(path).map_err(|e| usage(format!("cannot open {}: {e}", path.display())))?;
                    efficiency::estimate_weighted(&read_events(file)?)?
                }
                (None, Some(p), Some(n_eff)) => WeightedEstimate64::from_summary(p, n_eff)?,
                _ => return Err(usage("wilson-weighted needs --events or --p-hat with --n-eff")),
            };
            let iv = wilson_weighted(&est, a.level)?;
            let [m, lo, hi, lvl, cl] = tail("wilson-weighted".into(), &iv);
            rec.push(vec![m, Cell::Empty, Cell::Empty, est.p_hat.into(), est.n_eff_hat.into(), Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty, lo, hi, lvl, cl]);
        }
        "wilson-extra" => {
            let (Some(n1), Some(n2), Some(v1), Some(v2)) = (a.n1, a.n2, a.var1, a.var2) else {
                return Err(usage("wilson-extra needs --n1, --n2, --var1 and --var2"));
            };
            let inputs = ExtraFluctuationInputs64::n1n2(n1, n2, v1, v2, 0.0);
            let iv = wilson_extra(&inputs, a.level)?;
            let [m, lo, hi, lvl, cl] = tail("wilson-extra".into(), &iv);
            rec.push(vec![m, Cell::Empty, Cell::Empty, inputs.p_hat().into(), Cell::Empty, n1.into(), n2.into(), v1.into(), v2.into(), lo, hi, lvl, cl]);
        }
        name => {
            let mut method: Method = name.parse().map_err(|e| usage(format!("{e}")))?;
            if let Some(mode) = a.fn_mode {
                match method {
                    Method::WilsonPoisson(_) if !name.contains(':') => method = Method::WilsonPoisson(mode),
                    Method::WilsonPoisson(_) => return Err(usage("give the f mode either in --method or in --fn-mode")),
                    _ => return Err(usage("--fn-mode applies to wilson-poisson only")),
                }
            }
            let (Some(k), Some(n)) = (a.k, a.n) else {
                return Err(usage(format!("{name} needs --k and --n")));
            };
            if k > n {
                return Err(usage(format!("--k {k} exceeds --n {n}")));
            }
            let iv = method.interval(EfficiencyCounts::new(k, n - k), a.level)?;
            let p_hat = if n > 0 { Cell::Num(k as f64 / n as f64) } else { Cell::Empty };
            let [m, lo, hi, lvl, cl] = tail(method.to_string(), &iv);
            rec.push(vec![m, k.into(), n.into(), p_hat, Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty, lo, hi, lvl, cl]);
        }
    }
    Ok(rec)
}

pub const FN_TABLE_COLUMNS: [&str; 5] = ["n", "f_exact", "f_large_n", "f_small_n", "f_approx"];

fn fn_table(a: &FnTableArgs, mut meta: Metadata) -> Result<OutputRecord, CliError> {
    if let Some(bad) = a.n_grid.0.iter().find(|&&n| n <= 0.0) {
        return Err(usage(format!("n-grid values must be positive, got {bad}")));
    }
    meta.push("f_exact_tolerance", a.tol);
    let rows = a
        .n_grid
        .0
        .par_iter()
        .map(|&n| Ok(vec![n.into(), f_exact(n, a.tol)?.into(), f_large_n(n).into(), f_small_n(n).into(), f_approx(n).into()]))
        .collect::<Result<Vec<_>, efficiency::Error>>()?;
    let mut rec = OutputRecord::new(meta, FN_TABLE_COLUMNS.to_vec());
    rows.into_iter().for_each(|r| rec.push(r));
    Ok(rec)
}

enum CoverageMethod {
    Exact(Method),
    Simulated(McMethod),
}

fn coverage_methods(a: &CoverageArgs) -> Result<Vec<CoverageMethod>, CliError> {
    a.method
        .iter()
        .map(|name| match name.as_str() {
            "wilson-weighted" => {
                let dist = a.dist.ok_or_else(|| usage("wilson-weighted needs --dist"))?;
                Ok(CoverageMethod::Simulated(McMethod::Weighted(dist)))
            }
            "wilson-extra" => {
                let fraction = a.bkg.ok_or_else(|| usage("wilson-extra needs --bkg"))?;
                if !(fraction >= 0.0 && fraction.is_finite()) {
                    return Err(usage(format!("--bkg must be non-negative, got {fraction}")));
                }
                Ok(CoverageMethod::Simulated(McMethod::Extra { fraction }))
            }
            other => other.parse().map(CoverageMethod::Exact).map_err(|e| usage(format!("{e}"))),
        })
        .collect()
}

pub const COVERAGE_COLUMNS: [&str; 11] =
    ["method", "param", "sampling", "mode", "p", "n", "level", "coverage", "deviation", "truncation_bound", "error"];
pub const AVERAGE_COLUMNS: [&str; 8] = ["method", "sampling", "n", "level", "grid", "average_coverage", "deviation", "error"];

/// Methods are emitted in the order given; within a method rows run over n, then p.
/// Simulated method `i` draws from `derive(i)` of the seed's root stream.
fn coverage(a: &CoverageArgs, mut meta: Metadata, seed: u64) -> Result<OutputRecord, CliError> {
    let methods = coverage_methods(a)?;
    let simulated = methods.iter().any(|m| matches!(m, CoverageMethod::Simulated(_)));
    if a.average {
        if simulated {
            return Err(usage("--average supports exact-enumeration methods only"));
        }
        if a.average_grid < MIN_AVERAGE_GRID {
            return Err(usage(format!("--average-grid must be at least {MIN_AVERAGE_GRID}")));
        }
        return coverage_average(a, methods, meta);
    }
    let reps = match (simulated, a.reps) {
        (true, None) => return Err(usage("wilson-weighted and wilson-extra need --reps")),
        (true, Some(0)) => return Err(usage("--reps must be positive")),
        (_, r) => r,
    };
    if let Some(r) = reps {
        meta.push("reps", r);
    }
    let root = RngStream::new(seed, 0);
    let mut rec = OutputRecord::new(meta, COVERAGE_COLUMNS.to_vec());
    for (i, method) in methods.iter().enumerate() {
        let (cells, param): (Vec<CoverageCell>, Cell) = match method {
            CoverageMethod::Exact(m) => (scan_grid(&[*m], &a.p_grid.0, &a.n_grid.0, a.level, a.sampling)?, Cell::Empty),
            CoverageMethod::Simulated(m) => {
                let param = match m {
                    McMethod::Weighted(d) => Cell::Str(d.to_string()),
                    McMethod::Extra { fraction } => Cell::Num(*fraction),
                };
                let reps = reps.expect("checked above");
                (scan_grid_mc(&[*m], &a.p_grid.0, &a.n_grid.0, a.level, reps, &root.derive(i as u64))?, param)
            }
        };
        for c in cells {
            rec.push(vec![
                c.method.into(),
                param.clone(),
                c.sampling.to_string().into(),
                c.mode.to_string().into(),
                c.p.into(),
                c.n.into(),
                c.level.into(),
                c.coverage.into(),
                c.coverage.map(|v| v - c.level).into(),
                c.truncation_bound.into(),
                c.error.into(),
            ]);
        }
    }
    Ok(rec)
}

fn coverage_average(a: &CoverageArgs, methods: Vec<CoverageMethod>, meta: Metadata) -> Result<OutputRecord, CliError> {
    let cells: Vec<(Method, f64)> = methods
        .iter()
        .flat_map(|m| match m {
            CoverageMethod::Exact(m) => a.n_grid.0.iter().map(|&n| (*m, n)).collect::<Vec<_>>(),
            CoverageMethod::Simulated(_) => unreachable!("rejected by the caller"),
        })
        .collect();
    let results: Vec<Result<f64, efficiency::Error>> = cells
        .par_iter()
        .map(|&(m, n)| average_coverage(m, n, a.level, a.average_grid, a.sampling))
        .collect();
    let mut rec = OutputRecord::new(meta, AVERAGE_COLUMNS.to_vec());
    for ((m, n), r) in cells.into_iter().zip(results) {
        let (cov, err) = match r {
            Ok(c) => (Some(c), None),
            Err(e) => (None, Some(e.to_string())),
        };
        rec.push(vec![
            m.to_string().into(),
            a.sampling.to_string().into(),
            n.into(),
            a.level.into(),
            (a.average_grid as u64).into(),
            cov.into(),
            cov.map(|c| c - a.level).into(),
            err.into(),
        ]);
    }
    Ok(rec)
}

pub const WEIGHTED_COLUMNS: [&str; 14] = [
    "dist",
    "n",
    "p",
    "reps",
    "mean_p_hat",
    "mc_variance",
    "mc_variance_se",
    "ratio_unity",
    "ratio_large_n_true",
    "ratio_large_n_eff",
    "ratio_blend_eff",
    "n_eff_ratio_min",
    "n_eff_ratio_max",
    "out_of_range",
];

/// Distribution `i` draws from `derive(i)` of the root stream.
fn simulate_weighted(a: &WeightedArgs, meta: Metadata, seed: u64) -> Result<OutputRecord, CliError> {
    let root = RngStream::new(seed, 0);
    let mut rec = OutputRecord::new(meta, WEIGHTED_COLUMNS.to_vec());
    for (i, dist) in a.dist.iter().enumerate() {
        let s = simulate_weighted_variance(dist, a.p, a.n, a.reps, &root.derive(i as u64))?;
        rec.push(vec![
            dist.to_string().into(),
            a.n.into(),
            a.p.into(),
            s.reps.into(),
            s.mean_p_hat.into(),
            s.mc_variance.into(),
            s.mc_variance_se.into(),
            s.unity.into(),
            s.large_n_true.into(),
            s.large_n_eff.into(),
            s.blend_eff.into(),
            s.n_eff_ratio_min.into(),
            s.n_eff_ratio_max.into(),
            s.out_of_range.into(),
        ]);
    }
    Ok(rec)
}

fn xdep_scenario(spec: &str) -> Result<XdepScenario, CliError> {
    if spec == "weight-bias" {
        return Ok(XdepScenario::weight_bias());
    }
    let bad = || usage(format!("unknown scenario `{spec}`; expected weight-bias or const:P,W"));
    let args = spec.strip_prefix("const:").ok_or_else(bad)?;
    let (p, w) = args.split_once(',').ok_or_else(bad)?;
    let (p, w): (f64, f64) = (p.trim().parse().map_err(|_| bad())?, w.trim().parse().map_err(|_| bad())?);
    if !(0.0..=1.0).contains(&p) || !(w > 0.0 && w.is_finite()) {
        return Err(bad());
    }
    Ok(XdepScenario::constant(p, w))
}

pub const XDEP_COLUMNS: [&str; 15] = [
    "scenario",
    "n",
    "reps",
    "p_bar",
    "mean_p_hat",
    "p_hat_se",
    "mc_variance",
    "mc_variance_se",
    "binned",
    "bootstrap",
    "bootstrap_samples",
    "wrong",
    "ratio_binned",
    "ratio_bootstrap",
    "ratio_wrong",
];
pub const BIAS_COLUMNS: [&str; 6] = ["scenario", "n", "reps", "p_bar", "mean_p_hat", "std_error"];

/// Grid point `i` draws from `derive(i)` of the root stream.
fn simulate_xdep_cmd(a: &XdepArgs, mut meta: Metadata, seed: u64) -> Result<OutputRecord, CliError> {
    let scenario = xdep_scenario(&a.scenario)?;
    if let Some(bad) = a.n.0.iter().find(|&&n| !(n > 0.0)) {
        return Err(usage(format!("--n values must be positive, got {bad}")));
    }
    let root = RngStream::new(seed, 0);
    if a.bias_only {
        let p_bar = scenario.p_bar()?;
        let points = bias_curve(&scenario, &a.n.0, a.reps as usize, &root)?;
        let mut rec = OutputRecord::new(meta, BIAS_COLUMNS.to_vec());
        for pt in points {
            rec.push(vec![a.scenario.clone().into(), pt.n.into(), (pt.reps as u64).into(), p_bar.into(), pt.mean_p_hat.into(), pt.std_error.into()]);
        }
        return Ok(rec);
    }
    let config = XdepConfig {
        bins: a.bins,
        bootstrap_replicas: a.bootstrap_replicas,
        bootstrap_samples: a.bootstrap_samples,
    };
    meta.push("bins", a.bins as u64);
    meta.push("bootstrap_replicas", a.bootstrap_replicas as u64);
    let mut rec = OutputRecord::new(meta, XDEP_COLUMNS.to_vec());
    for (i, &n) in a.n.0.iter().enumerate() {
        let s = simulate_xdep(&scenario, n, a.reps, &config, &root.derive(i as u64))?;
        rec.push(vec![
            a.scenario.clone().into(),
            n.into(),
            s.reps.into(),
            s.p_bar.into(),
            s.mean_p_hat.into(),
            s.p_hat_se.into(),
            s.mc_variance.into(),
            s.mc_variance_se.into(),
            s.binned.into(),
            s.bootstrap.into(),
            s.bootstrap_samples.into(),
            s.wrong.into(),
            (s.binned / s.mc_variance).into(),
            (s.bootstrap / s.mc_variance).into(),
            (s.wrong / s.mc_variance).into(),
        ]);
    }
    Ok(rec)
}

pub const EXTRA_COLUMNS: [&str; 13] = [
    "n",
    "p",
    "bkg",
    "reps",
    "level",
    "mean_p_hat",
    "mc_sd",
    "formula_sd",
    "corrected_sd",
    "ratio_formula",
    "ratio_corrected",
    "coverage",
    "degenerate",
];

/// Grid point `i` draws from `derive(i)` of the root stream.
fn simulate_extra_cmd(a: &ExtraArgs, meta: Metadata, seed: u64) -> Result<OutputRecord, CliError> {
    if !(a.bkg >= 0.0 && a.bkg.is_finite()) {
        return Err(usage(format!("--bkg must be non-negative, got {}", a.bkg)));
    }
    if let Some(bad) = a.p_grid.0.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(usage(format!("p-grid values must lie in [0, 1], got {bad}")));
    }
    let root = RngStream::new(seed, 0);
    let mut rec = OutputRecord::new(meta, EXTRA_COLUMNS.to_vec());
    for (i, &p) in a.p_grid.0.iter().enumerate() {
        let scenario = ScenarioExtra::with_background_fraction(a.n, p, a.bkg, a.reps);
        let s = simulate_extra(&scenario, a.level, &root.derive(i as u64))?;
        rec.push(vec![
            a.n.into(),
            p.into(),
            a.bkg.into(),
            s.reps.into(),
            a.level.into(),
            s.mean_p_hat.into(),
            s.mc_sd.into(),
            s.formula_sd.into(),
            s.corrected_sd.into(),
            (s.formula_sd / s.mc_sd).into(),
            (s.corrected_sd / s.mc_sd).into(),
            s.coverage.into(),
            s.degenerate.into(),
        ]);
    }
    Ok(rec)
}
