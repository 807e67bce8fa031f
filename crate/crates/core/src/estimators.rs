//! Point estimators of the efficiency and resampling-based variance estimates.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::quadrature::integrate;
use crate::rng::{Dist, RngStream};
use crate::summation::KahanSum;
use crate::variance::{var_xdep, XBin};
use crate::{Error, Real, Result};

/// Redraws allowed per bootstrap replica whose weights sum to zero.
const MAX_BOOTSTRAP_REDRAWS: usize = 100;
/// Attempts to draw a non-empty sample before giving up.
const MAX_EMPTY_REDRAWS: usize = 10_000;

pub const MIN_BOOTSTRAP_REPLICAS: usize = 100;
pub const MIN_BIAS_REPS: usize = 100;

/// Observed success and failure counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct EfficiencyCounts {
    pub successes: u64,
    pub failures: u64,
}

impl EfficiencyCounts {
    pub fn new(successes: u64, failures: u64) -> Self {
        Self {
            successes,
            failures,
        }
    }

    /// `k` successes out of `n` trials.
    pub fn from_total(k: u64, n: u64) -> Result<Self> {
        if k > n {
            return Err(Error::domain(
                "EfficiencyCounts",
                format!("successes {k} exceed total {n}"),
            ));
        }
        Ok(Self::new(k, n - k))
    }

    pub fn total(&self) -> u64 {
        self.successes + self.failures
    }

    /// Successes and failures swapped.
    pub fn mirrored(&self) -> Self {
        Self::new(self.failures, self.successes)
    }
}

/// `n1 / (n1 + n2)`.
pub fn estimate<T: Real>(counts: EfficiencyCounts) -> Result<T> {
    let n = counts.total();
    if n == 0 {
        return Err(Error::UndefinedEstimate);
    }
    Ok(T::lit(counts.successes as f64) / T::lit(n as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedEntry<T> {
    pub weight: T,
    pub success: bool,
    pub x: Option<T>,
}

impl<T> WeightedEntry<T> {
    pub fn new(weight: T, success: bool) -> Self {
        Self {
            weight,
            success,
            x: None,
        }
    }

    pub fn with_x(weight: T, success: bool, x: T) -> Self {
        Self {
            weight,
            success,
            x: Some(x),
        }
    }
}

/// A weighted sample of trials, each with an optional covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedObservations<T> {
    entries: Vec<WeightedEntry<T>>,
}

impl<T: Real> WeightedObservations<T> {
    pub fn new(entries: Vec<WeightedEntry<T>>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::domain("WeightedObservations", "no entries"));
        }
        if let Some(bad) = entries.iter().find(|e| !e.weight.is_finite()) {
            return Err(Error::domain(
                "WeightedObservations",
                format!("non-finite weight {}", bad.weight),
            ));
        }
        Ok(Self { entries })
    }

    pub fn from_parts(weights: &[T], successes: &[bool]) -> Result<Self> {
        if weights.len() != successes.len() {
            return Err(Error::domain(
                "WeightedObservations",
                format!("{} weights but {} flags", weights.len(), successes.len()),
            ));
        }
        Self::new(
            weights
                .iter()
                .zip(successes)
                .map(|(&w, &s)| WeightedEntry::new(w, s))
                .collect(),
        )
    }

    pub fn entries(&self) -> &[WeightedEntry<T>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Weighted efficiency estimate together with its effective count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedEstimate<T> {
    pub p_hat: T,
    /// `sum_w^2 / sum_w2`.
    pub n_eff_hat: T,
    pub sum_w: T,
    pub sum_w2: T,
    /// The weights sum to a negative value; the estimator is unstable.
    pub negative_sum: bool,
    /// `p_hat` fell outside `[0, 1]` (only possible with negative weights).
    pub out_of_range: bool,
}

impl<T: Real> WeightedEstimate<T> {
    /// Builds an estimate from a summary `(p_hat, n_eff)` when per-event data is unavailable.
    pub fn from_summary(p_hat: T, n_eff: T) -> Result<Self> {
        if !(n_eff > T::zero() && n_eff.is_finite()) {
            return Err(Error::domain(
                "WeightedEstimate",
                format!("n_eff must be positive, got {n_eff}"),
            ));
        }
        if !p_hat.is_finite() {
            return Err(Error::domain("WeightedEstimate", format!("p_hat = {p_hat}")));
        }
        Ok(Self {
            p_hat,
            n_eff_hat: n_eff,
            sum_w: n_eff,
            sum_w2: n_eff,
            negative_sum: false,
            out_of_range: p_hat < T::zero() || p_hat > T::one(),
        })
    }

    /// `p_hat` clipped into `[0, 1]`.
    pub fn p_hat_clipped(&self) -> T {
        self.p_hat.max(T::zero()).min(T::one())
    }
}

fn weighted_from_iter<'a, T: Real + 'a>(
    entries: impl Iterator<Item = &'a WeightedEntry<T>>,
) -> Result<WeightedEstimate<T>> {
    let mut sw = KahanSum::new();
    let mut sw_success = KahanSum::new();
    let mut sw2 = KahanSum::new();
    for e in entries {
        sw.add(e.weight);
        sw2.add(e.weight * e.weight);
        if e.success {
            sw_success.add(e.weight);
        }
    }
    let (sum_w, sum_w2) = (sw.total(), sw2.total());
    if sum_w == T::zero() {
        return Err(Error::DegenerateSample("weights sum to zero".into()));
    }
    let p_hat = sw_success.total() / sum_w;
    Ok(WeightedEstimate {
        p_hat,
        n_eff_hat: sum_w * sum_w / sum_w2,
        sum_w,
        sum_w2,
        negative_sum: sum_w < T::zero(),
        out_of_range: p_hat < T::zero() || p_hat > T::one(),
    })
}

/// Ratio of the summed success weights to the summed weights.
///
/// Uses compensated summation, so the result depends on input order only
/// through floating-point rounding. A negative weight sum is flagged rather
/// than rejected.
pub fn estimate_weighted<T: Real>(obs: &WeightedObservations<T>) -> Result<WeightedEstimate<T>> {
    weighted_from_iter(obs.entries.iter())
}

/// Weighted average efficiency `int w p f dx / int w f dx` over `support`.
pub fn effective_efficiency_target<T, P, W, D>(p_fn: P, w_fn: W, density: D, support: (T, T)) -> Result<T>
where
    T: Real,
    P: Fn(T) -> T,
    W: Fn(T) -> T,
    D: Fn(T) -> T,
{
    let tol = T::lit(1e-8).max(T::epsilon() * T::lit(16.0));
    let num = integrate(|x| w_fn(x) * p_fn(x) * density(x), support.0, support.1, tol)?;
    let den = integrate(|x| w_fn(x) * density(x), support.0, support.1, tol)?;
    if !(den > T::zero()) {
        return Err(Error::domain(
            "effective_efficiency_target",
            format!("weighted density integrates to {den}"),
        ));
    }
    Ok(num / den)
}

fn bootstrap_replica<T: Real>(entries: &[WeightedEntry<T>], rng: &mut RngStream) -> Result<T> {
    let n = entries.len();
    for _ in 0..MAX_BOOTSTRAP_REDRAWS {
        let mut sw = KahanSum::new();
        let mut sw_success = KahanSum::new();
        for _ in 0..n {
            let e = &entries[rng.index(n)];
            sw.add(e.weight);
            if e.success {
                sw_success.add(e.weight);
            }
        }
        let sum = sw.total();
        if sum != T::zero() {
            return Ok(sw_success.total() / sum);
        }
    }
    Err(Error::DegenerateSample(format!(
        "bootstrap resample weights summed to zero {MAX_BOOTSTRAP_REDRAWS} times"
    )))
}

/// Bootstrap estimate of the variance of the weighted efficiency estimate.
///
/// Each replica resamples whole events (weight, flag and covariate together)
/// with replacement, keeping the original sample size. Replica `i` draws from
/// `rng.derive(i)` and the replicas are reduced in index order, so the result
/// does not depend on the thread count.
pub fn bootstrap_variance<T: Real>(obs: &WeightedObservations<T>, replicas: usize, rng: &RngStream) -> Result<T> {
    if replicas < MIN_BOOTSTRAP_REPLICAS {
        return Err(Error::domain(
            "bootstrap_variance",
            format!("need at least {MIN_BOOTSTRAP_REPLICAS} replicas, got {replicas}"),
        ));
    }
    if obs.len() < 2 {
        return Err(Error::domain("bootstrap_variance", "need at least 2 entries"));
    }
    let estimates: Vec<T> = (0..replicas)
        .into_par_iter()
        .map(|i| bootstrap_replica(&obs.entries, &mut rng.derive(i as u64)))
        .collect::<Result<_>>()?;
    Ok(sample_variance(&estimates))
}

fn sample_variance<T: Real>(xs: &[T]) -> T {
    let n = T::lit(xs.len() as f64);
    let mean = xs.iter().copied().collect::<KahanSum<T>>().total() / n;
    let ss = xs.iter().map(|&x| (x - mean) * (x - mean)).collect::<KahanSum<T>>().total();
    ss / (n - T::one())
}

/// Binned estimate of the covariate-dependent variance: per-bin success
/// fraction and mean weight over `bins` equal-width bins of `support`, fed to
/// [`var_xdep`] with `n` set to the sample size. Empty bins are dropped.
pub fn binned_xdep_variance<T: Real>(obs: &WeightedObservations<T>, bins: usize, support: (T, T)) -> Result<T> {
    if bins < 2 {
        return Err(Error::domain("binned_xdep_variance", "need at least 2 bins"));
    }
    let (lo, hi) = support;
    if !(lo < hi) {
        return Err(Error::domain("binned_xdep_variance", format!("empty support [{lo}, {hi}]")));
    }
    let mut counts = vec![0u64; bins];
    let mut successes = vec![0u64; bins];
    let mut weights = vec![KahanSum::<T>::new(); bins];
    let scale = T::lit(bins as f64) / (hi - lo);
    for e in obs.entries() {
        let x = e
            .x
            .ok_or_else(|| Error::domain("binned_xdep_variance", "entry without covariate"))?;
        let idx = ((x - lo) * scale).floor().to_i64().unwrap_or(0).clamp(0, bins as i64 - 1) as usize;
        counts[idx] += 1;
        successes[idx] += e.success as u64;
        weights[idx].add(e.weight);
    }
    let summary: Vec<XBin<T>> = (0..bins)
        .filter(|&i| counts[i] > 0)
        .map(|i| {
            let c = T::lit(counts[i] as f64);
            XBin {
                p: T::lit(successes[i] as f64) / c,
                w: weights[i].total() / c,
                count: counts[i],
            }
        })
        .collect();
    var_xdep(&summary, T::lit(obs.len() as f64))
}

type Curve = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Event model in which efficiency and weight both depend on a covariate `x`.
#[derive(Clone)]
pub struct XdepScenario {
    p: Curve,
    w: Curve,
    density: Curve,
    x_dist: Dist,
    support: (f64, f64),
}

impl fmt::Debug for XdepScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("XdepScenario")
            .field("x_dist", &self.x_dist)
            .field("support", &self.support)
            .finish_non_exhaustive()
    }
}

impl XdepScenario {
    /// `p(x)`, `w(x)`, the sampler for `x`, its density and support.
    pub fn new(
        p: impl Fn(f64) -> f64 + Send + Sync + 'static,
        w: impl Fn(f64) -> f64 + Send + Sync + 'static,
        x_dist: Dist,
        density: impl Fn(f64) -> f64 + Send + Sync + 'static,
        support: (f64, f64),
    ) -> Result<Self> {
        x_dist.validate()?;
        Ok(Self {
            p: Arc::new(p),
            w: Arc::new(w),
            density: Arc::new(density),
            x_dist,
            support,
        })
    }

    /// `p(x) = x`, `w(x) = x^3`, `x ~ Uniform(0, 1)`; the weighted average efficiency is 0.8.
    pub fn weight_bias() -> Self {
        Self::new(
            |x| x,
            |x| x * x * x,
            Dist::Uniform { lo: 0.0, hi: 1.0 },
            |_| 1.0,
            (0.0, 1.0),
        )
        .expect("valid preset")
    }

    /// Constant efficiency and weight, `x ~ Uniform(0, 1)`.
    pub fn constant(p: f64, w: f64) -> Self {
        Self::new(
            move |_| p,
            move |_| w,
            Dist::Uniform { lo: 0.0, hi: 1.0 },
            |_| 1.0,
            (0.0, 1.0),
        )
        .expect("valid preset")
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn efficiency(&self, x: f64) -> f64 {
        (self.p)(x)
    }

    pub fn weight(&self, x: f64) -> f64 {
        (self.w)(x)
    }

    /// Asymptotic target of the weighted estimator.
    pub fn p_bar(&self) -> Result<f64> {
        effective_efficiency_target(&*self.p, &*self.w, &*self.density, self.support)
    }

    /// Draws one sample whose size is Poisson with mean `n`, conditioned on being non-empty.
    pub fn draw_sample(&self, n: f64, rng: &mut RngStream) -> Result<WeightedObservations<f64>> {
        let mut size = 0;
        for _ in 0..MAX_EMPTY_REDRAWS {
            size = rng.poisson(n)?;
            if size > 0 {
                break;
            }
        }
        if size == 0 {
            return Err(Error::domain("draw_sample", format!("mean size {n} too small")));
        }
        let mut entries = Vec::with_capacity(size as usize);
        for _ in 0..size {
            let x = self.x_dist.sample(rng)?;
            let success = rng.bernoulli((self.p)(x));
            entries.push(WeightedEntry::with_x((self.w)(x), success, x));
        }
        WeightedObservations::new(entries)
    }
}

/// Mean of the weighted estimate at one expected sample size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasPoint {
    pub n: f64,
    pub mean_p_hat: f64,
    pub std_error: f64,
    pub reps: usize,
}

/// Average weighted estimate over `reps` independent samples for each expected size in `n_grid`.
///
/// Sample `j` at grid point `i` draws from `rng.derive(i).derive(j)`.
pub fn bias_curve(scenario: &XdepScenario, n_grid: &[f64], reps: usize, rng: &RngStream) -> Result<Vec<BiasPoint>> {
    if reps < MIN_BIAS_REPS {
        return Err(Error::domain(
            "bias_curve",
            format!("need at least {MIN_BIAS_REPS} repetitions, got {reps}"),
        ));
    }
    n_grid
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let cell = rng.derive(i as u64);
            let estimates: Vec<f64> = (0..reps)
                .into_par_iter()
                .map(|j| {
                    let mut r = cell.derive(j as u64);
                    let obs = scenario.draw_sample(n, &mut r)?;
                    Ok(estimate_weighted(&obs)?.p_hat)
                })
                .collect::<Result<_>>()?;
            let mean = estimates.iter().copied().collect::<KahanSum<f64>>().total() / reps as f64;
            let var = sample_variance(&estimates);
            Ok(BiasPoint {
                n,
                mean_p_hat: mean,
                std_error: (var / reps as f64).sqrt(),
                reps,
            })
        })
        .collect()
}
