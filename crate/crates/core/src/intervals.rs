//! Confidence and credible intervals for an efficiency.

use std::fmt;
use std::str::FromStr;

use crate::estimators::{estimate, EfficiencyCounts, WeightedEstimate};
use crate::kernel::{quantile_beta, z_from_level};
use crate::variance::{f_large_n, f_of, ExtraFluctuationInputs, FnMode, Parameterization};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodTag {
    Wilson,
    WilsonPoisson,
    WilsonWeighted,
    WilsonExtra,
    ClopperPearson,
    Normal,
    BayesianUniform,
    BayesianJeffreys,
}

impl MethodTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodTag::Wilson => "wilson",
            MethodTag::WilsonPoisson => "wilson-poisson",
            MethodTag::WilsonWeighted => "wilson-weighted",
            MethodTag::WilsonExtra => "wilson-extra",
            MethodTag::ClopperPearson => "clopper-pearson",
            MethodTag::Normal => "normal",
            MethodTag::BayesianUniform => "bayesian-uniform",
            MethodTag::BayesianJeffreys => "bayesian-jeffreys",
        }
    }
}

impl fmt::Display for MethodTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T> {
    pub lower: T,
    pub upper: T,
    pub level: T,
    pub method: MethodTag,
    /// Bounds were truncated to `[0, 1]`, or the point estimate was clipped before use.
    pub clipped: bool,
}

impl<T: Real> Interval<T> {
    /// Closed-interval membership.
    pub fn contains(&self, p: T) -> bool {
        self.lower <= p && p <= self.upper
    }

    pub fn width(&self) -> T {
        self.upper - self.lower
    }

    fn clip(mut self) -> Self {
        let (zero, one) = (T::zero(), T::one());
        if self.lower < zero || self.upper > one {
            self.clipped = true;
            self.lower = self.lower.max(zero);
            self.upper = self.upper.min(one);
        }
        self
    }
}

/// Prior of the Beta-posterior credible interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PriorKind {
    /// Beta(1, 1).
    Uniform,
    /// Beta(1/2, 1/2).
    JeffreysBinomial,
}

impl PriorKind {
    fn params<T: Real>(&self) -> (T, T) {
        match self {
            PriorKind::Uniform => (T::one(), T::one()),
            PriorKind::JeffreysBinomial => (T::lit(0.5), T::lit(0.5)),
        }
    }
}

/// Interval constructors that take plain counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Wilson,
    WilsonPoisson(FnMode),
    ClopperPearson,
    NormalApprox,
    Bayesian(PriorKind),
}

impl Method {
    pub fn interval<T: Real>(&self, counts: EfficiencyCounts, level: T) -> Result<Interval<T>> {
        match *self {
            Method::Wilson => wilson(counts, level),
            Method::WilsonPoisson(mode) => wilson_poisson(counts, level, mode),
            Method::ClopperPearson => clopper_pearson(counts, level),
            Method::NormalApprox => normal_approx(counts, level),
            Method::Bayesian(prior) => bayesian(counts, level, prior),
        }
    }

    pub fn tag(&self) -> MethodTag {
        match self {
            Method::Wilson => MethodTag::Wilson,
            Method::WilsonPoisson(_) => MethodTag::WilsonPoisson,
            Method::ClopperPearson => MethodTag::ClopperPearson,
            Method::NormalApprox => MethodTag::Normal,
            Method::Bayesian(PriorKind::Uniform) => MethodTag::BayesianUniform,
            Method::Bayesian(PriorKind::JeffreysBinomial) => MethodTag::BayesianJeffreys,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::WilsonPoisson(mode) => write!(f, "wilson-poisson:{mode}"),
            m => f.write_str(m.tag().as_str()),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// `wilson`, `wilson-poisson[:<f mode>]`, `clopper-pearson`, `normal`,
    /// `bayesian-uniform`, `bayesian-jeffreys`. The f mode defaults to `exact`.
    fn from_str(s: &str) -> Result<Self> {
        let (head, tail) = match s.split_once(':') {
            Some((h, t)) => (h, Some(t)),
            None => (s, None),
        };
        let method = match head {
            "wilson" => Method::Wilson,
            "wilson-poisson" => Method::WilsonPoisson(match tail {
                Some(t) => t.parse()?,
                None => FnMode::exact(),
            }),
            "clopper-pearson" => Method::ClopperPearson,
            "normal" => Method::NormalApprox,
            "bayesian-uniform" => Method::Bayesian(PriorKind::Uniform),
            "bayesian-jeffreys" => Method::Bayesian(PriorKind::JeffreysBinomial),
            _ => return Err(Error::domain("Method", format!("unknown method `{s}`"))),
        };
        if tail.is_some() && !matches!(method, Method::WilsonPoisson(_)) {
            return Err(Error::domain("Method", format!("method `{head}` takes no parameter")));
        }
        Ok(method)
    }
}

/// Variance polynomial `A p^2 + B p + C` in `(p_hat - p)^2 = (z/n)^2 (A p^2 + B p + C)`.
#[derive(Debug, Clone, Copy)]
struct Quadratic<T> {
    a: T,
    b: T,
    c: T,
}

impl<T: Real> Quadratic<T> {
    /// The same polynomial in `q = 1 - p`.
    fn mirrored(self) -> Self {
        let two = T::lit(2.0);
        Self {
            a: self.a,
            b: -two * self.a - self.b,
            c: self.a + self.b + self.c,
        }
    }

    /// Smaller root of `(p_hat - p)^2 - kappa (A p^2 + B p + C)`.
    fn lower_root(&self, p_hat: T, kappa: T) -> Result<T> {
        let two = T::lit(2.0);
        let lead = T::one() - kappa * self.a;
        let beta = two * p_hat + kappa * self.b;
        let c = p_hat * p_hat - kappa * self.c;
        let disc = beta * beta - T::lit(4.0) * lead * c;
        if !(lead > T::zero()) || !(disc >= T::zero()) {
            return Err(Error::DegenerateInterval {
                a: lead.as_f64(),
                b: (-beta).as_f64(),
                c: c.as_f64(),
            });
        }
        let q = if beta >= T::zero() {
            (beta + disc.sqrt()) / two
        } else {
            (beta - disc.sqrt()) / two
        };
        if q == T::zero() {
            return Ok(T::zero());
        }
        Ok((q / lead).min(c / q))
    }

    /// `[lower, upper]` with the upper bound taken from the mirrored problem.
    fn roots(&self, p_hat: T, kappa: T) -> Result<(T, T)> {
        let lower = self.lower_root(p_hat, kappa)?;
        let upper = T::one() - self.mirrored().lower_root(T::one() - p_hat, kappa)?;
        Ok((lower, upper))
    }
}

fn p_hat_and_n<T: Real>(counts: EfficiencyCounts) -> Result<(T, T)> {
    let p = estimate(counts)?;
    Ok((p, T::lit(counts.total() as f64)))
}

fn generalized_wilson<T: Real>(p_hat: T, n: T, f: T, level: T, method: MethodTag) -> Result<Interval<T>> {
    let z = z_from_level(level)?;
    let nf = n * f;
    let quad = Quadratic {
        a: -nf,
        b: nf,
        c: T::zero(),
    };
    let (lower, upper) = quad.roots(p_hat, z * z / (n * n))?;
    Ok(Interval {
        lower,
        upper,
        level,
        method,
        clipped: false,
    })
}

/// Standard Wilson score interval.
pub fn wilson<T: Real>(counts: EfficiencyCounts, level: T) -> Result<Interval<T>> {
    let (p, n) = p_hat_and_n(counts)?;
    generalized_wilson(p, n, T::one(), level, MethodTag::Wilson)
}

/// Wilson interval for a Poisson-distributed total, with the binomial
/// variance scaled by `f(n_hat)`.
pub fn wilson_poisson<T: Real>(counts: EfficiencyCounts, level: T, mode: FnMode) -> Result<Interval<T>> {
    let (p, n) = p_hat_and_n(counts)?;
    let f = f_of(mode, n)?;
    generalized_wilson(p, n, f, level, MethodTag::WilsonPoisson)
}

/// Wilson interval for a weighted sample: `n_eff` in place of `n` and the
/// large-`n` form of `f`.
pub fn wilson_weighted<T: Real>(est: &WeightedEstimate<T>, level: T) -> Result<Interval<T>> {
    let n = est.n_eff_hat;
    if !(n > T::zero() && n.is_finite()) {
        return Err(Error::domain("wilson_weighted", format!("n_eff must be positive, got {n}")));
    }
    let p = est.p_hat_clipped();
    let mut iv = generalized_wilson(p, n, f_large_n(n), level, MethodTag::WilsonWeighted)?;
    iv.clipped = est.out_of_range;
    Ok(iv)
}

/// Wilson interval for counts with uncorrelated extra fluctuations.
///
/// Accepts `(n1, n2)` inputs with `rho = 0` only. Bounds outside `[0, 1]` are
/// clipped and flagged.
pub fn wilson_extra<T: Real>(inputs: &ExtraFluctuationInputs<T>, level: T) -> Result<Interval<T>> {
    if inputs.parameterization != Parameterization::N1N2 || inputs.rho != T::zero() {
        return Err(Error::domain(
            "wilson_extra",
            "requires (n1, n2) inputs with rho = 0",
        ));
    }
    inputs.validate()?;
    let z = z_from_level(level)?;
    let n = inputs.total();
    let p = inputs.p_hat();
    let s1 = inputs.var1 - inputs.n1;
    let s2 = inputs.var2_or_varn - inputs.n2_or_n;
    let quad = Quadratic {
        a: s1 + s2 - n,
        b: n - T::lit(2.0) * s1,
        c: s1,
    };
    let (lower, upper) = quad.roots(p, z * z / (n * n))?;
    Ok(Interval {
        lower,
        upper,
        level,
        method: MethodTag::WilsonExtra,
        clipped: false,
    }
    .clip())
}

/// Equal-tailed Clopper-Pearson interval.
pub fn clopper_pearson<T: Real>(counts: EfficiencyCounts, level: T) -> Result<Interval<T>> {
    let alpha = alpha_of(level)?;
    let n = counts.total();
    if n == 0 {
        return Err(Error::UndefinedEstimate);
    }
    let (k, m) = (counts.successes, counts.failures);
    let half = alpha / T::lit(2.0);
    let lower = if k == 0 {
        T::zero()
    } else {
        quantile_beta(half, T::lit(k as f64), T::lit((m + 1) as f64))?
    };
    let upper = if m == 0 {
        T::one()
    } else {
        quantile_beta(T::one() - half, T::lit((k + 1) as f64), T::lit(m as f64))?
    };
    Ok(Interval {
        lower,
        upper,
        level,
        method: MethodTag::ClopperPearson,
        clipped: false,
    })
}

/// `p_hat +- z sqrt(p_hat (1 - p_hat) / n)`, clipped to `[0, 1]`.
pub fn normal_approx<T: Real>(counts: EfficiencyCounts, level: T) -> Result<Interval<T>> {
    let (p, n) = p_hat_and_n(counts)?;
    normal_approx_with_variance(p, p * (T::one() - p) / n, level)
}

/// `p_hat +- z sqrt(var)`, clipped to `[0, 1]`.
pub fn normal_approx_with_variance<T: Real>(p_hat: T, var: T, level: T) -> Result<Interval<T>> {
    if !(var >= T::zero() && var.is_finite()) {
        return Err(Error::domain("normal_approx", format!("variance must be >= 0, got {var}")));
    }
    if !p_hat.is_finite() {
        return Err(Error::domain("normal_approx", format!("p_hat = {p_hat}")));
    }
    let half = z_from_level(level)? * var.sqrt();
    Ok(Interval {
        lower: p_hat - half,
        upper: p_hat + half,
        level,
        method: MethodTag::Normal,
        clipped: false,
    }
    .clip())
}

/// Equal-tailed credible interval of the Beta posterior. No adjustment at
/// `k = 0` or `k = n`.
pub fn bayesian<T: Real>(counts: EfficiencyCounts, level: T, prior: PriorKind) -> Result<Interval<T>> {
    let alpha = alpha_of(level)?;
    if counts.total() == 0 {
        return Err(Error::UndefinedEstimate);
    }
    let (a0, b0) = prior.params::<T>();
    let a = T::lit(counts.successes as f64) + a0;
    let b = T::lit(counts.failures as f64) + b0;
    let half = alpha / T::lit(2.0);
    Ok(Interval {
        lower: quantile_beta(half, a, b)?,
        upper: quantile_beta(T::one() - half, a, b)?,
        level,
        method: match prior {
            PriorKind::Uniform => MethodTag::BayesianUniform,
            PriorKind::JeffreysBinomial => MethodTag::BayesianJeffreys,
        },
        clipped: false,
    })
}

fn alpha_of<T: Real>(level: T) -> Result<T> {
    if !(level > T::zero() && level < T::one()) {
        return Err(Error::domain("interval", format!("level must lie in (0, 1), got {level}")));
    }
    Ok(T::one() - level)
}
