//! Seeded Monte-Carlo studies of the variance formulas and interval coverage.
//!
//! Replicates are processed in fixed-size chunks; chunk `i` draws from
//! `rng.derive(i)` and chunk summaries are merged in index order, so every
//! result is reproducible bit-for-bit from the seed regardless of threads.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::estimators::{binned_xdep_variance, bootstrap_variance, estimate_weighted, WeightedEntry, WeightedObservations, XdepScenario};
use crate::intervals::{wilson_extra, wilson_weighted};
use crate::rng::RngStream;
use crate::summation::Moments;
use crate::variance::{f_approx, f_large_n, f_of, var_extra, var_weighted, ExtraFluctuationInputs, FnMode};
use crate::{Error, Result};

use super::{CoverageCell, CoverageMode, Sampling};

/// Replicates per RNG chunk.
pub const CHUNK: u64 = 1024;
pub const MIN_WEIGHTED_REPS: u64 = 10_000;
pub const MIN_EXTRA_REPS: u64 = 10_000;
pub const MIN_XDEP_REPS: u64 = 500;
/// Redraws allowed for a negative count or a zero weight sum.
const MAX_REDRAWS: usize = 100;
/// Attempts at a non-zero Poisson total.
const MAX_EMPTY_REDRAWS: usize = 10_000;

/// Splits `reps` into chunks, maps each with its own derived stream and
/// folds the summaries in chunk order. The closure receives the index of the
/// chunk's first replicate and the chunk size.
fn run_chunked<S, F, M>(reps: u64, rng: &RngStream, chunk: F, merge: M) -> Result<S>
where
    S: Send + Default,
    F: Fn(u64, u64, &mut RngStream) -> Result<S> + Sync,
    M: Fn(&mut S, S),
{
    let chunks = reps.div_ceil(CHUNK);
    let parts: Vec<S> = (0..chunks)
        .into_par_iter()
        .map(|i| {
            let size = CHUNK.min(reps - i * CHUNK);
            chunk(i * CHUNK, size, &mut rng.derive(i))
        })
        .collect::<Result<_>>()?;
    let mut total = S::default();
    for part in parts {
        merge(&mut total, part);
    }
    Ok(total)
}

fn nonzero_poisson(n: f64, rng: &mut RngStream) -> Result<u64> {
    for _ in 0..MAX_EMPTY_REDRAWS {
        let k = rng.poisson(n)?;
        if k > 0 {
            return Ok(k);
        }
    }
    Err(Error::domain("simulate", format!("mean total {n} too small")))
}

fn check_reps(op: &'static str, reps: u64, min: u64) -> Result<()> {
    if reps < min {
        return Err(Error::domain(op, format!("need at least {min} repetitions, got {reps}")));
    }
    Ok(())
}

fn check_p(op: &'static str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(op, format!("p must lie in [0, 1], got {p}")));
    }
    Ok(())
}

fn check_n(op: &'static str, n: f64) -> Result<()> {
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::domain(op, format!("n must be positive, got {n}")));
    }
    Ok(())
}

/// Sampling distribution of event weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightDist {
    Constant(f64),
    Exponential { mean: f64 },
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl WeightDist {
    pub fn mean(&self) -> f64 {
        match *self {
            WeightDist::Constant(w) => w,
            WeightDist::Exponential { mean } | WeightDist::Normal { mean, .. } => mean,
            WeightDist::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    pub fn second_moment(&self) -> f64 {
        let m = self.mean();
        m * m + match *self {
            WeightDist::Constant(_) => 0.0,
            WeightDist::Exponential { mean } => mean * mean,
            WeightDist::Normal { sd, .. } => sd * sd,
            WeightDist::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
        }
    }

    /// `E[w]^2 / E[w^2]`, the large-sample value of `n_eff / n_hat`.
    pub fn n_eff_fraction(&self) -> f64 {
        self.mean() * self.mean() / self.second_moment()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            WeightDist::Constant(w) => w.is_finite(),
            WeightDist::Exponential { mean } => mean.is_finite(),
            WeightDist::Normal { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            WeightDist::Uniform { lo, hi } => lo < hi && lo.is_finite() && hi.is_finite(),
        };
        if !ok {
            return Err(Error::domain("WeightDist", format!("invalid parameters in {self}")));
        }
        if !(self.mean() > 0.0) {
            return Err(Error::domain("WeightDist", format!("{self} has non-positive mean")));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut RngStream) -> Result<f64> {
        match *self {
            WeightDist::Constant(w) => Ok(w),
            WeightDist::Exponential { mean } => rng.exponential(mean),
            WeightDist::Normal { mean, sd } => rng.normal(mean, sd),
            WeightDist::Uniform { lo, hi } => rng.uniform_range(lo, hi),
        }
    }
}

impl fmt::Display for WeightDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            WeightDist::Constant(w) => write!(f, "const:{w}"),
            WeightDist::Exponential { mean } => write!(f, "exp:{mean}"),
            WeightDist::Normal { mean, sd } => write!(f, "normal:{mean},{sd}"),
            WeightDist::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
        }
    }
}

impl FromStr for WeightDist {
    type Err = Error;

    /// `const:W`, `exp:MEAN`, `normal:MEAN,SD`, `uniform:LO,HI`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::domain("WeightDist", format!("cannot parse distribution `{s}`"));
        let (name, args) = s.split_once(':').ok_or_else(bad)?;
        let nums = args
            .split(',')
            .map(|a| a.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        let dist = match (name, nums.as_slice()) {
            ("const", &[w]) => WeightDist::Constant(w),
            ("exp", &[mean]) => WeightDist::Exponential { mean },
            ("normal", &[mean, sd]) => WeightDist::Normal { mean, sd },
            ("uniform", &[lo, hi]) => WeightDist::Uniform { lo, hi },
            _ => return Err(bad()),
        };
        dist.validate()?;
        Ok(dist)
    }
}

fn draw_weighted(dist: &WeightDist, p: f64, n: f64, rng: &mut RngStream) -> Result<WeightedObservations<f64>> {
    for _ in 0..MAX_REDRAWS {
        let size = nonzero_poisson(n, rng)?;
        let mut entries = Vec::with_capacity(size as usize);
        let mut sum = 0.0;
        for _ in 0..size {
            let w = dist.sample(rng)?;
            sum += w;
            entries.push(WeightedEntry::new(w, rng.bernoulli(p)));
        }
        if sum != 0.0 {
            return WeightedObservations::new(entries);
        }
    }
    Err(Error::DegenerateSample(format!("weights summed to zero {MAX_REDRAWS} times")))
}

/// Ratios of mean estimated variance to Monte-Carlo variance for a weighted sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedVarianceStudy {
    pub reps: u64,
    pub mc_variance: f64,
    pub mc_variance_se: f64,
    pub mean_p_hat: f64,
    /// `f = 1`.
    pub unity: f64,
    /// Large-`n` form of `f` at the true mean total.
    pub large_n_true: f64,
    /// Large-`n` form of `f` at `n_eff`.
    pub large_n_eff: f64,
    /// Blended `f` at `n_eff`.
    pub blend_eff: f64,
    pub n_eff_ratio_min: f64,
    pub n_eff_ratio_max: f64,
    /// Replicates whose estimate fell outside `[0, 1]` (clipped for the variance formula).
    pub out_of_range: u64,
}

struct WeightedAcc {
    p_hat: Moments,
    est: [Moments; 4],
    ratio_min: f64,
    ratio_max: f64,
    out_of_range: u64,
}

impl Default for WeightedAcc {
    fn default() -> Self {
        Self {
            p_hat: Moments::new(),
            est: Default::default(),
            ratio_min: f64::INFINITY,
            ratio_max: f64::NEG_INFINITY,
            out_of_range: 0,
        }
    }
}

/// Monte-Carlo check of the weighted-sample variance formula.
///
/// Each replicate draws `n_hat ~ Poisson(n)` (zero redrawn), i.i.d. weights and
/// Bernoulli(`p`) flags.
pub fn simulate_weighted_variance(
    dist: &WeightDist,
    p: f64,
    n: f64,
    reps: u64,
    rng: &RngStream,
) -> Result<WeightedVarianceStudy> {
    const OP: &str = "simulate_weighted_variance";
    dist.validate()?;
    check_p(OP, p)?;
    check_n(OP, n)?;
    check_reps(OP, reps, MIN_WEIGHTED_REPS)?;
    let f_true = f_large_n(n);
    let acc = run_chunked(
        reps,
        rng,
        |_, size, r| {
            let mut acc = WeightedAcc::default();
            for _ in 0..size {
                let obs = draw_weighted(dist, p, n, r)?;
                let est = estimate_weighted(&obs)?;
                acc.p_hat.push(est.p_hat);
                acc.out_of_range += est.out_of_range as u64;
                let pc = est.p_hat_clipped();
                let base = var_weighted(pc, est.n_eff_hat, FnMode::Unity)?;
                acc.est[0].push(base);
                acc.est[1].push(base * f_true);
                acc.est[2].push(base * f_large_n(est.n_eff_hat));
                acc.est[3].push(base * f_approx(est.n_eff_hat));
                let ratio = est.n_eff_hat / obs.len() as f64;
                acc.ratio_min = acc.ratio_min.min(ratio);
                acc.ratio_max = acc.ratio_max.max(ratio);
            }
            Ok(acc)
        },
        |t, part| {
            t.p_hat.merge(&part.p_hat);
            for (a, b) in t.est.iter_mut().zip(&part.est) {
                a.merge(b);
            }
            t.ratio_min = t.ratio_min.min(part.ratio_min);
            t.ratio_max = t.ratio_max.max(part.ratio_max);
            t.out_of_range += part.out_of_range;
        },
    )?;
    let mc = acc.p_hat.variance();
    Ok(WeightedVarianceStudy {
        reps,
        mc_variance: mc,
        mc_variance_se: acc.p_hat.std_error_of_variance(),
        mean_p_hat: acc.p_hat.mean,
        unity: acc.est[0].mean / mc,
        large_n_true: acc.est[1].mean / mc,
        large_n_eff: acc.est[2].mean / mc,
        blend_eff: acc.est[3].mean / mc,
        n_eff_ratio_min: acc.ratio_min,
        n_eff_ratio_max: acc.ratio_max,
        out_of_range: acc.out_of_range,
    })
}

/// Counts with Poisson cores plus independent Gaussian extra noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioExtra {
    pub n: f64,
    pub p: f64,
    /// Standard deviation of the extra noise on the success count.
    pub bkg_sigma1: f64,
    /// Standard deviation of the extra noise on the failure count.
    pub bkg_sigma2: f64,
    pub reps: u64,
}

impl ScenarioExtra {
    /// Extra noise variance `fraction * n` on each count.
    pub fn with_background_fraction(n: f64, p: f64, fraction: f64, reps: u64) -> Self {
        let sigma = (fraction * n).sqrt();
        Self {
            n,
            p,
            bkg_sigma1: sigma,
            bkg_sigma2: sigma,
            reps,
        }
    }

    fn validate(&self) -> Result<()> {
        self.validate_model()?;
        check_reps("simulate_extra", self.reps, MIN_EXTRA_REPS)
    }

    fn validate_model(&self) -> Result<()> {
        const OP: &str = "simulate_extra";
        check_n(OP, self.n)?;
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::domain(OP, format!("p must lie in (0, 1), got {}", self.p)));
        }
        for s in [self.bkg_sigma1, self.bkg_sigma2] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::domain(OP, format!("noise sd must be >= 0, got {s}")));
            }
        }
        Ok(())
    }

    fn draw_count(mean: f64, sigma: f64, rng: &mut RngStream) -> Result<f64> {
        for _ in 0..MAX_REDRAWS {
            let mut x = rng.poisson(mean)? as f64;
            if sigma > 0.0 {
                x += rng.normal(0.0, sigma)?;
            }
            if x > 0.0 {
                return Ok(x);
            }
        }
        Err(Error::domain(
            "simulate_extra",
            format!("count with mean {mean} non-positive {MAX_REDRAWS} times"),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtraStudy {
    pub reps: u64,
    pub mean_p_hat: f64,
    pub mc_sd: f64,
    /// `sqrt` of the mean second-order variance estimate.
    pub formula_sd: f64,
    /// Same with the Poisson term scaled by the blended `f(n_hat)`.
    pub corrected_sd: f64,
    /// Fraction of replicates whose extra-fluctuation Wilson interval covers `p`.
    pub coverage: f64,
    /// Replicates with no usable interval (counted as not covering).
    pub degenerate: u64,
}

#[derive(Default)]
struct ExtraAcc {
    p_hat: Moments,
    var: Moments,
    corrected: Moments,
    covered: u64,
    degenerate: u64,
}

/// Noise-injection check of the extra-fluctuation variance and interval.
///
/// Non-positive count draws are redrawn.
pub fn simulate_extra(scenario: &ScenarioExtra, level: f64, rng: &RngStream) -> Result<ExtraStudy> {
    scenario.validate()?;
    let s = *scenario;
    let (s1, s2) = (s.bkg_sigma1 * s.bkg_sigma1, s.bkg_sigma2 * s.bkg_sigma2);
    let acc = run_chunked(
        s.reps,
        rng,
        |_, size, r| {
            let mut acc = ExtraAcc::default();
            for _ in 0..size {
                let n1 = ScenarioExtra::draw_count(s.p * s.n, s.bkg_sigma1, r)?;
                let n2 = ScenarioExtra::draw_count((1.0 - s.p) * s.n, s.bkg_sigma2, r)?;
                let inputs = ExtraFluctuationInputs::n1n2(n1, n2, n1 + s1, n2 + s2, 0.0);
                let n = n1 + n2;
                let p_hat = n1 / n;
                acc.p_hat.push(p_hat);
                let v = var_extra(&inputs)?.value;
                acc.var.push(v);
                let poisson = p_hat * (1.0 - p_hat) / n;
                acc.corrected.push(v - poisson + poisson * f_of(FnMode::Blend, n)?);
                match wilson_extra(&inputs, level) {
                    Ok(iv) => acc.covered += iv.contains(s.p) as u64,
                    Err(Error::DegenerateInterval { .. }) => acc.degenerate += 1,
                    Err(e) => return Err(e),
                }
            }
            Ok(acc)
        },
        |t, part| {
            t.p_hat.merge(&part.p_hat);
            t.var.merge(&part.var);
            t.corrected.merge(&part.corrected);
            t.covered += part.covered;
            t.degenerate += part.degenerate;
        },
    )?;
    Ok(ExtraStudy {
        reps: s.reps,
        mean_p_hat: acc.p_hat.mean,
        mc_sd: acc.p_hat.variance().sqrt(),
        formula_sd: acc.var.mean.sqrt(),
        corrected_sd: acc.corrected.mean.sqrt(),
        coverage: acc.covered as f64 / s.reps as f64,
        degenerate: acc.degenerate,
    })
}

/// Settings of the covariate-dependent variance study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XdepConfig {
    pub bins: usize,
    pub bootstrap_replicas: usize,
    /// Number of leading replicates on which the bootstrap is evaluated.
    pub bootstrap_samples: u64,
}

impl Default for XdepConfig {
    fn default() -> Self {
        Self {
            bins: 20,
            bootstrap_replicas: 100,
            bootstrap_samples: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XdepStudy {
    pub reps: u64,
    pub p_bar: f64,
    pub mean_p_hat: f64,
    pub p_hat_se: f64,
    pub mc_variance: f64,
    pub mc_variance_se: f64,
    /// Mean binned estimate.
    pub binned: f64,
    /// Mean bootstrap estimate over the bootstrap subset.
    pub bootstrap: f64,
    pub bootstrap_samples: u64,
    /// Mean of the weighted-sample formula, which ignores the covariate.
    pub wrong: f64,
}

#[derive(Default)]
struct XdepAcc {
    p_hat: Moments,
    binned: Moments,
    wrong: Moments,
    boot: Moments,
}

/// Monte-Carlo truth against the binned, bootstrap and covariate-blind variance estimates.
pub fn simulate_xdep(scenario: &XdepScenario, n: f64, reps: u64, config: &XdepConfig, rng: &RngStream) -> Result<XdepStudy> {
    const OP: &str = "simulate_xdep";
    check_n(OP, n)?;
    check_reps(OP, reps, MIN_XDEP_REPS)?;
    let boot_samples = config.bootstrap_samples.min(reps);
    let support = scenario.support();
    let acc = run_chunked(
        reps,
        rng,
        |first, size, r| {
            let mut acc = XdepAcc::default();
            for j in 0..size {
                let obs = scenario.draw_sample(n, r)?;
                let est = estimate_weighted(&obs)?;
                acc.p_hat.push(est.p_hat);
                acc.binned.push(binned_xdep_variance(&obs, config.bins, support)?);
                acc.wrong.push(var_weighted(est.p_hat_clipped(), est.n_eff_hat, FnMode::LargeN)?);
                if first + j < boot_samples {
                    let boot_rng = r.derive(j);
                    acc.boot.push(bootstrap_variance(&obs, config.bootstrap_replicas, &boot_rng)?);
                }
            }
            Ok(acc)
        },
        |t, part| {
            t.p_hat.merge(&part.p_hat);
            t.binned.merge(&part.binned);
            t.wrong.merge(&part.wrong);
            t.boot.merge(&part.boot);
        },
    )?;
    Ok(XdepStudy {
        reps,
        p_bar: scenario.p_bar()?,
        mean_p_hat: acc.p_hat.mean,
        p_hat_se: acc.p_hat.std_error_of_mean(),
        mc_variance: acc.p_hat.variance(),
        mc_variance_se: acc.p_hat.std_error_of_variance(),
        binned: acc.binned.mean,
        bootstrap: if acc.boot.count > 0 { acc.boot.mean } else { f64::NAN },
        bootstrap_samples: acc.boot.count,
        wrong: acc.wrong.mean,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonTrialsStudy {
    pub reps: u64,
    pub mc_variance: f64,
    pub mc_variance_se: f64,
    pub mean_p_hat: f64,
}

/// Variance of `k / n_hat` with `n_hat ~ Poisson(n)` (zero skipped) and `k ~ Binomial(n_hat, p)`.
pub fn simulate_poisson_trials(p: f64, n: f64, reps: u64, rng: &RngStream) -> Result<PoissonTrialsStudy> {
    const OP: &str = "simulate_poisson_trials";
    check_p(OP, p)?;
    check_n(OP, n)?;
    check_reps(OP, reps, 2)?;
    let acc = run_chunked(
        reps,
        rng,
        |_, size, r| {
            let mut m = Moments::new();
            for _ in 0..size {
                let total = nonzero_poisson(n, r)?;
                let k = r.binomial(total, p)?;
                m.push(k as f64 / total as f64);
            }
            Ok(m)
        },
        |t: &mut Moments, part| t.merge(&part),
    )?;
    Ok(PoissonTrialsStudy {
        reps,
        mc_variance: acc.variance(),
        mc_variance_se: acc.std_error_of_variance(),
        mean_p_hat: acc.mean,
    })
}

/// Interval methods whose coverage is measured by simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum McMethod {
    /// Weighted Wilson interval with weights from the given distribution.
    Weighted(WeightDist),
    /// Extra-fluctuation Wilson interval with noise variance `fraction * n` per count.
    Extra { fraction: f64 },
}

impl fmt::Display for McMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            McMethod::Weighted(_) => "wilson-weighted",
            McMethod::Extra { .. } => "wilson-extra",
        })
    }
}

fn mc_cell_coverage(method: &McMethod, p: f64, n: f64, level: f64, reps: u64, rng: &RngStream) -> Result<f64> {
    match method {
        McMethod::Weighted(dist) => {
            dist.validate()?;
            check_p("mc_coverage", p)?;
            check_n("mc_coverage", n)?;
            let covered = run_chunked(
                reps,
                rng,
                |_, size, r| {
                    let mut covered = 0u64;
                    for _ in 0..size {
                        let obs = draw_weighted(dist, p, n, r)?;
                        let est = estimate_weighted(&obs)?;
                        covered += wilson_weighted(&est, level)?.contains(p) as u64;
                    }
                    Ok(covered)
                },
                |t: &mut u64, part| *t += part,
            )?;
            Ok(covered as f64 / reps as f64)
        }
        &McMethod::Extra { fraction } => {
            if !(fraction >= 0.0 && fraction.is_finite()) {
                return Err(Error::domain("mc_coverage", format!("background fraction must be >= 0, got {fraction}")));
            }
            let s = ScenarioExtra::with_background_fraction(n, p, fraction, reps);
            s.validate_model()?;
            let (s1, s2) = (s.bkg_sigma1 * s.bkg_sigma1, s.bkg_sigma2 * s.bkg_sigma2);
            let covered = run_chunked(
                reps,
                rng,
                |_, size, r| {
                    let mut covered = 0u64;
                    for _ in 0..size {
                        let n1 = ScenarioExtra::draw_count(p * n, s.bkg_sigma1, r)?;
                        let n2 = ScenarioExtra::draw_count((1.0 - p) * n, s.bkg_sigma2, r)?;
                        let inputs = ExtraFluctuationInputs::n1n2(n1, n2, n1 + s1, n2 + s2, 0.0);
                        match wilson_extra(&inputs, level) {
                            Ok(iv) => covered += iv.contains(p) as u64,
                            Err(Error::DegenerateInterval { .. }) => {}
                            Err(e) => return Err(e),
                        }
                    }
                    Ok(covered)
                },
                |t: &mut u64, part| *t += part,
            )?;
            Ok(covered as f64 / reps as f64)
        }
    }
}

/// Monte-Carlo coverage for every `(method, n, p)`, in that nesting order.
///
/// Cell `i` in output order draws from `rng.derive(i)`. Totals are Poisson
/// with mean `n`, zero redrawn. Failing cells record their error.
pub fn scan_grid_mc(
    methods: &[McMethod],
    p_grid: &[f64],
    n_grid: &[f64],
    level: f64,
    reps: u64,
    rng: &RngStream,
) -> Result<Vec<CoverageCell>> {
    if methods.is_empty() || p_grid.is_empty() || n_grid.is_empty() {
        return Err(Error::domain("scan_grid_mc", "empty method, p or n grid"));
    }
    if reps == 0 {
        return Err(Error::domain("scan_grid_mc", "reps must be positive"));
    }
    let cells: Vec<(McMethod, f64, f64)> = methods
        .iter()
        .flat_map(|&m| n_grid.iter().flat_map(move |&n| p_grid.iter().map(move |&p| (m, n, p))))
        .collect();
    let mode = CoverageMode::MonteCarlo { reps, seed: rng.seed() };
    Ok(cells
        .par_iter()
        .enumerate()
        .map(|(i, (m, n, p))| {
            let result = mc_cell_coverage(m, *p, *n, level, reps, &rng.derive(i as u64)).map(|c| (c, 0.0));
            CoverageCell::from_result(m.to_string(), *p, *n, level, Sampling::Poisson, mode, result)
        })
        .collect())
}
