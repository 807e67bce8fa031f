//! Coverage probabilities of interval methods.
//!
//! Exact mode enumerates every outcome. Under Poisson sampling the total
//! `n_hat` is Poisson with mean `n`, outcomes with `n_hat = 0` are discarded
//! and the rest renormalized by `1 - e^-n`, and the series is cut where the
//! remaining tail mass drops below [`POISSON_TAIL`]. An interval covers `p`
//! when `lower <= p <= upper`.

pub mod simulate;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::estimators::EfficiencyCounts;
use crate::intervals::Method;
use crate::kernel::poisson_upper_cutoff;
use crate::special::ln_factorial;
use crate::summation::KahanSum;
use crate::{Error, Result};

/// Poisson tail mass left out of exact Poisson-sampling sums.
pub const POISSON_TAIL: f64 = 1e-10;
pub const DEFAULT_AVERAGE_GRID: usize = 1000;
pub const MIN_AVERAGE_GRID: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sampling {
    /// Fixed total `n`.
    Binomial,
    /// Total drawn from Poisson(`n`), `n_hat = 0` excluded.
    Poisson,
}

impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sampling::Binomial => "binomial",
            Sampling::Poisson => "poisson",
        })
    }
}

impl FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binomial" => Ok(Sampling::Binomial),
            "poisson" => Ok(Sampling::Poisson),
            _ => Err(Error::domain("Sampling", format!("unknown sampling `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoverageMode {
    Exact,
    MonteCarlo { reps: u64, seed: u64 },
}

impl fmt::Display for CoverageMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoverageMode::Exact => f.write_str("exact"),
            CoverageMode::MonteCarlo { reps, seed } => write!(f, "mc:{reps}:{seed}"),
        }
    }
}

/// One cell of a coverage scan. Exactly one of `coverage` and `error` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageCell {
    pub method: String,
    pub p: f64,
    pub n: f64,
    pub level: f64,
    pub sampling: Sampling,
    pub mode: CoverageMode,
    pub coverage: Option<f64>,
    /// Upper bound on the neglected Poisson tail mass (after renormalization).
    pub truncation_bound: f64,
    pub error: Option<String>,
}

impl CoverageCell {
    pub(crate) fn from_result(
        method: String,
        p: f64,
        n: f64,
        level: f64,
        sampling: Sampling,
        mode: CoverageMode,
        result: Result<(f64, f64)>,
    ) -> Self {
        let (coverage, truncation_bound, error) = match result {
            Ok((c, bound)) => (Some(c), bound, None),
            Err(e) => (None, 0.0, Some(e.to_string())),
        };
        Self {
            method,
            p,
            n,
            level,
            sampling,
            mode,
            coverage,
            truncation_bound,
            error,
        }
    }
}

/// Poisson-sampling coverage with the bound on the neglected tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonCoverage {
    pub coverage: f64,
    pub truncation_bound: f64,
}

/// Intervals of one method at one level for every `k <= n_hat <= max_total`.
///
/// Intervals do not depend on the true `p`, so a table serves all `p` cells.
#[derive(Debug, Clone)]
pub struct IntervalTable {
    method: Method,
    level: f64,
    min_total: u64,
    rows: Vec<Vec<(f64, f64)>>,
    ln_fact: Vec<f64>,
}

impl IntervalTable {
    /// Tabulates totals `min_total..=max_total`.
    pub fn build(method: Method, level: f64, min_total: u64, max_total: u64) -> Result<Self> {
        if min_total == 0 || min_total > max_total {
            return Err(Error::domain(
                "IntervalTable",
                format!("invalid total range {min_total}..={max_total}"),
            ));
        }
        let rows = (min_total..=max_total)
            .into_par_iter()
            .map(|n| {
                (0..=n)
                    .map(|k| {
                        let iv = method.interval(EfficiencyCounts::new(k, n - k), level)?;
                        Ok((iv.lower, iv.upper))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let ln_fact = (0..=max_total).map(ln_factorial::<f64>).collect();
        Ok(Self {
            method,
            level,
            min_total,
            rows,
            ln_fact,
        })
    }

    /// Table covering everything a Poisson-sampling cell at mean `n` needs.
    pub fn for_poisson(method: Method, level: f64, n: f64) -> Result<Self> {
        check_mean(n)?;
        let (max_total, _) = poisson_upper_cutoff(n, POISSON_TAIL);
        Self::build(method, level, 1, max_total)
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn max_total(&self) -> u64 {
        self.min_total + self.rows.len() as u64 - 1
    }

    pub fn interval(&self, k: u64, n: u64) -> Option<(f64, f64)> {
        let row = self.rows.get(n.checked_sub(self.min_total)? as usize)?;
        row.get(k as usize).copied()
    }

    /// Exact binomial coverage at true efficiency `p` and total `n`.
    pub fn coverage_binomial(&self, p: f64, n: u64) -> Result<f64> {
        check_prob(p)?;
        let row = n
            .checked_sub(self.min_total)
            .and_then(|i| self.rows.get(i as usize))
            .ok_or_else(|| Error::domain("coverage_binomial", format!("total {n} not tabulated")))?;
        if p == 0.0 || p == 1.0 {
            let k = if p == 0.0 { 0 } else { n as usize };
            let (lo, hi) = row[k];
            return Ok(if lo <= p && p <= hi { 1.0 } else { 0.0 });
        }
        let (ln_p, ln_q) = (p.ln(), (-p).ln_1p());
        let ln_n = self.ln_fact[n as usize];
        let mut sum = KahanSum::new();
        for (k, &(lo, hi)) in row.iter().enumerate() {
            if lo <= p && p <= hi {
                let m = n as usize - k;
                let ln_pmf = ln_n - self.ln_fact[k] - self.ln_fact[m] + k as f64 * ln_p + m as f64 * ln_q;
                sum.add(ln_pmf.exp());
            }
        }
        Ok(sum.total().min(1.0))
    }

    /// Exact Poisson-sampling coverage at true efficiency `p` and mean total `n`.
    pub fn coverage_poisson(&self, p: f64, n: f64) -> Result<PoissonCoverage> {
        check_prob(p)?;
        check_mean(n)?;
        let (max_total, tail) = poisson_upper_cutoff(n, POISSON_TAIL);
        if self.min_total != 1 || max_total > self.max_total() {
            return Err(Error::domain(
                "coverage_poisson",
                format!("table does not span totals 1..={max_total}"),
            ));
        }
        let norm = -(-n).exp_m1();
        let ln_n = n.ln();
        let mut sum = KahanSum::new();
        for total in 1..=max_total {
            let weight = (total as f64 * ln_n - n - self.ln_fact[total as usize]).exp();
            if weight == 0.0 {
                continue;
            }
            sum.add(weight * self.coverage_binomial(p, total)?);
        }
        Ok(PoissonCoverage {
            coverage: (sum.total() / norm).min(1.0),
            truncation_bound: tail / norm,
        })
    }

    /// Coverage under the given sampling; the bound is zero for binomial sampling.
    pub fn coverage(&self, p: f64, n: f64, sampling: Sampling) -> Result<(f64, f64)> {
        match sampling {
            Sampling::Binomial => Ok((self.coverage_binomial(p, integer_total(n)?)?, 0.0)),
            Sampling::Poisson => {
                let c = self.coverage_poisson(p, n)?;
                Ok((c.coverage, c.truncation_bound))
            }
        }
    }

    /// Midpoint-rule average of the coverage over `p` in `(0, 1)` with `grid` cells.
    pub fn average(&self, n: f64, sampling: Sampling, grid: usize) -> Result<f64> {
        if grid < MIN_AVERAGE_GRID {
            return Err(Error::domain(
                "average_coverage",
                format!("grid must have at least {MIN_AVERAGE_GRID} cells, got {grid}"),
            ));
        }
        let values = (0..grid)
            .into_par_iter()
            .map(|i| Ok(self.coverage((i as f64 + 0.5) / grid as f64, n, sampling)?.0))
            .collect::<Result<Vec<f64>>>()?;
        Ok(values.into_iter().collect::<KahanSum<f64>>().total() / grid as f64)
    }
}

fn check_prob(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain("coverage", format!("p must lie in [0, 1], got {p}")));
    }
    Ok(())
}

fn check_mean(n: f64) -> Result<()> {
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::domain("coverage", format!("n must be positive, got {n}")));
    }
    Ok(())
}

fn integer_total(n: f64) -> Result<u64> {
    if !(n >= 1.0 && n.fract() == 0.0 && n < u32::MAX as f64) {
        return Err(Error::domain(
            "coverage_binomial",
            format!("binomial sampling needs an integer total >= 1, got {n}"),
        ));
    }
    Ok(n as u64)
}

fn table_for(method: Method, level: f64, n: f64, sampling: Sampling) -> Result<IntervalTable> {
    match sampling {
        Sampling::Binomial => {
            let total = integer_total(n)?;
            IntervalTable::build(method, level, total, total)
        }
        Sampling::Poisson => IntervalTable::for_poisson(method, level, n),
    }
}

/// Exact coverage when the total is fixed at `n`.
pub fn coverage_binomial(method: Method, p: f64, n: u64, level: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::UndefinedEstimate);
    }
    IntervalTable::build(method, level, n, n)?.coverage_binomial(p, n)
}

/// Exact coverage when the total is Poisson with mean `n`.
pub fn coverage_poisson(method: Method, p: f64, n: f64, level: f64) -> Result<PoissonCoverage> {
    IntervalTable::for_poisson(method, level, n)?.coverage_poisson(p, n)
}

/// Coverage averaged over a uniform `p`.
pub fn average_coverage(method: Method, n: f64, level: f64, grid: usize, sampling: Sampling) -> Result<f64> {
    table_for(method, level, n, sampling)?.average(n, sampling, grid)
}

/// Exact coverage for every `(method, n, p)`, in that nesting order.
///
/// A failing cell records its error and the scan continues. Cells are
/// independent, so the output does not depend on the thread count.
pub fn scan_grid(
    methods: &[Method],
    p_grid: &[f64],
    n_grid: &[f64],
    level: f64,
    sampling: Sampling,
) -> Result<Vec<CoverageCell>> {
    if methods.is_empty() || p_grid.is_empty() || n_grid.is_empty() {
        return Err(Error::domain("scan_grid", "empty method, p or n grid"));
    }
    let blocks: Vec<(Method, f64)> = methods
        .iter()
        .flat_map(|&m| n_grid.iter().map(move |&n| (m, n)))
        .collect();
    let tables: Vec<Result<IntervalTable>> = blocks
        .par_iter()
        .map(|&(m, n)| table_for(m, level, n, sampling))
        .collect();
    let cells = blocks
        .par_iter()
        .zip(tables.par_iter())
        .flat_map_iter(|(&(method, n), table)| {
            p_grid.iter().map(move |&p| {
                let result = match table {
                    Ok(t) => t.coverage(p, n, sampling),
                    Err(e) => Err(e.clone()),
                };
                CoverageCell::from_result(method.to_string(), p, n, level, sampling, CoverageMode::Exact, result)
            })
        })
        .collect();
    Ok(cells)
}
