//! Variance formulas for the efficiency estimator.
//!
//! The binomial variance `p(1 - p)/n` is the baseline. When the number of
//! trials is itself Poisson distributed (and experiments with zero trials are
//! discarded), the variance picks up a multiplicative correction `f(n)`;
//! [`FnMode`] selects how that correction is evaluated. Weighted samples
//! replace `n` by the effective count, a covariate shared by efficiency and
//! weight adds a second term, and counts obtained from a fit carry extra
//! fluctuations on top of the Poisson floor.

use std::fmt;
use std::str::FromStr;

use crate::kernel::ln_pmf_poisson;
use crate::summation::KahanSum;
use crate::{Error, Real, Result};

/// Deformation parameter of the q-logarithm in the blend transition.
const BLEND_Q: f64 = 0.82;
/// Transition centre of the blend, in units of `n`.
const BLEND_CENTER: f64 = 2.92;
/// Transition width of the blend, in q-log units.
const BLEND_WIDTH: f64 = 0.18;

/// Half-width of the lower summation window of [`f_exact`], in Poisson standard deviations.
const F_EXACT_LOWER_SIGMAS: f64 = 12.0;
/// Consecutive negligible terms required before [`f_exact`] stops.
const F_EXACT_QUIET_TERMS: u32 = 30;

/// How the Poisson-trials correction `f(n)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FnMode {
    /// Numerical summation to the given relative tolerance, in `(0, 1e-3]`.
    Exact { tol: f64 },
    /// Third-order large-`n` expansion `(2n + n^2 + n^3 + 6)/n^3`.
    LargeN,
    /// Small-`n` branch `n - n^2/4`.
    SmallN,
    /// Logistic blend of the two expansions.
    Blend,
    /// `f = 1`, i.e. the binomial baseline.
    Unity,
}

impl FnMode {
    pub const DEFAULT_EXACT_TOL: f64 = 1e-12;

    pub fn exact() -> Self {
        FnMode::Exact {
            tol: Self::DEFAULT_EXACT_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            FnMode::Exact { tol } if !(tol > 0.0 && tol <= 1e-3) => Err(Error::domain(
                "f_exact",
                format!("tolerance must lie in (0, 1e-3], got {tol}"),
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for FnMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FnMode::Exact { tol } if *tol == Self::DEFAULT_EXACT_TOL => f.write_str("exact"),
            FnMode::Exact { tol } => write!(f, "exact:{tol:e}"),
            FnMode::LargeN => f.write_str("large-n"),
            FnMode::SmallN => f.write_str("small-n"),
            FnMode::Blend => f.write_str("blend"),
            FnMode::Unity => f.write_str("unity"),
        }
    }
}

impl FromStr for FnMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mode = match s {
            "exact" => FnMode::exact(),
            "large-n" => FnMode::LargeN,
            "small-n" => FnMode::SmallN,
            "blend" => FnMode::Blend,
            "unity" => FnMode::Unity,
            other => match other.strip_prefix("exact:") {
                Some(tol) => FnMode::Exact {
                    tol: tol
                        .parse()
                        .map_err(|_| Error::domain("FnMode", format!("bad tolerance '{tol}'")))?,
                },
                None => return Err(Error::domain("FnMode", format!("unknown mode '{s}'"))),
            },
        };
        mode.validate()?;
        Ok(mode)
    }
}

fn check_prob<T: Real>(op: &'static str, p: T) -> Result<()> {
    if p >= T::zero() && p <= T::one() {
        Ok(())
    } else {
        Err(Error::domain(op, format!("probability must lie in [0, 1], got {p}")))
    }
}

fn check_positive<T: Real>(op: &'static str, what: &str, x: T) -> Result<()> {
    if x > T::zero() && x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(op, format!("{what} must be positive and finite, got {x}")))
    }
}

/// Binomial variance of the efficiency estimate, `p(1 - p)/n`.
pub fn var_binomial<T: Real>(p: T, n: T) -> Result<T> {
    check_prob("var_binomial", p)?;
    check_positive("var_binomial", "n", n)?;
    Ok(p * (T::one() - p) / n)
}

/// Poisson-trials correction by direct summation,
/// `f(n) = 1/(1 - e^-n) * sum_{k >= 1} (n/k) Pois(k; n)`.
///
/// The sum starts twelve standard deviations below the mean and stops once
/// thirty consecutive terms past the mode each add less than `tol` relative to
/// the running sum.
pub fn f_exact<T: Real>(n: T, tol: T) -> Result<T> {
    check_positive("f_exact", "n", n)?;
    if !(tol > T::zero() && tol <= T::lit(1e-3)) {
        return Err(Error::domain(
            "f_exact",
            format!("tolerance must lie in (0, 1e-3], got {tol}"),
        ));
    }
    let nf = n.as_f64();
    let start = (nf - F_EXACT_LOWER_SIGMAS * nf.sqrt()).floor().max(1.0) as u64;
    let cap = start + 1000 + (100.0 * nf.sqrt()) as u64;
    let ln_n = n.ln();
    let mut sum = KahanSum::new();
    let mut quiet = 0;
    let mut k = start;
    while k <= cap {
        let kt = T::lit(k as f64);
        let term = (ln_n - kt.ln() + ln_pmf_poisson(k, n)).exp();
        sum.add(term);
        if kt > n && term < tol * sum.total() {
            quiet += 1;
            if quiet >= F_EXACT_QUIET_TERMS {
                break;
            }
        } else {
            quiet = 0;
        }
        k += 1;
    }
    Ok(sum.total() / -(-n).exp_m1())
}

/// Large-`n` expansion of the correction to third order, `(2n + n^2 + n^3 + 6)/n^3`.
///
/// Good to better than one percent from `n` of about 5 upward; diverges as `n -> 0`.
pub fn f_large_n<T: Real>(n: T) -> T {
    (T::lit(2.0) * n + n * n + n * n * n + T::lit(6.0)) / (n * n * n)
}

/// Small-`n` branch of the correction, `n - n^2/4`.
pub fn f_small_n<T: Real>(n: T) -> T {
    n - n * n / T::lit(4.0)
}

/// Deformed logarithm `ln_q(x) = (x^(1 - q) - 1)/(1 - q)`, the natural log at `q = 1`.
pub fn q_log<T: Real>(x: T, q: T) -> Result<T> {
    check_positive("q_log", "x", x)?;
    Ok(q_log_unchecked(x, q))
}

#[inline]
fn q_log_unchecked<T: Real>(x: T, q: T) -> T {
    let d = T::one() - q;
    if d == T::zero() {
        x.ln()
    } else {
        (x.powf(d) - T::one()) / d
    }
}

/// Weight of the large-`n` branch in [`f_approx`].
pub fn blend_weight<T: Real>(n: T) -> T {
    let q = T::lit(BLEND_Q);
    let arg = (q_log_unchecked(n, q) - q_log_unchecked(T::lit(BLEND_CENTER), q)) / T::lit(BLEND_WIDTH);
    T::one() / (T::one() + (-arg).exp())
}

/// Closed-form approximation of the correction over the whole range of `n`,
/// blending [`f_small_n`] and [`f_large_n`] with a logistic transition in
/// q-log space centred at `n = 2.92`.
pub fn f_approx<T: Real>(n: T) -> T {
    let z = blend_weight(n);
    if z == T::zero() {
        return f_small_n(n);
    }
    (T::one() - z) * f_small_n(n) + z * f_large_n(n)
}

/// Evaluates the correction in the requested mode.
pub fn f_of<T: Real>(mode: FnMode, n: T) -> Result<T> {
    check_positive("f_of", "n", n)?;
    Ok(match mode {
        FnMode::Unity => T::one(),
        FnMode::Exact { tol } => {
            mode.validate()?;
            f_exact(n, T::lit(tol))?
        }
        FnMode::LargeN => f_large_n(n),
        FnMode::SmallN => f_small_n(n),
        FnMode::Blend => f_approx(n),
    })
}

/// Variance of the efficiency estimate when the number of trials is Poisson
/// with mean `n`, `p(1 - p)/n * f(n)`.
pub fn var_poisson_trials<T: Real>(p: T, n: T, mode: FnMode) -> Result<T> {
    Ok(var_binomial(p, n)? * f_of(mode, n)?)
}

/// Effective count `(sum w)^2 / sum w^2` of a weighted sample.
pub fn effective_count<T: Real>(weights: &[T]) -> Result<T> {
    if weights.is_empty() {
        return Err(Error::domain("effective_count", "empty weight sequence"));
    }
    let mut sw = KahanSum::new();
    let mut sw2 = KahanSum::new();
    for &w in weights {
        sw.add(w);
        sw2.add(w * w);
    }
    let (sw, sw2) = (sw.total(), sw2.total());
    if !(sw > T::zero()) || !(sw2 > T::zero()) {
        return Err(Error::domain(
            "effective_count",
            format!("weights must have a positive sum, got sum={sw}, sum of squares={sw2}"),
        ));
    }
    Ok(sw * sw / sw2)
}

/// Variance of the weighted efficiency estimate, `p(1 - p)/n_eff * f(n_eff)`.
///
/// The recommended mode is [`FnMode::LargeN`].
pub fn var_weighted<T: Real>(p: T, n_eff: T, mode: FnMode) -> Result<T> {
    check_prob("var_weighted", p)?;
    check_positive("var_weighted", "n_eff", n_eff)?;
    Ok(p * (T::one() - p) / n_eff * f_of(mode, n_eff)?)
}

/// Per-bin summary used by [`var_xdep`]: efficiency, mean weight and event count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XBin<T> {
    pub p: T,
    pub w: T,
    pub count: u64,
}

/// Asymptotic variance of the weighted estimate when efficiency and weight both
/// depend on a covariate, with expectations replaced by count-weighted bin means:
///
/// `[E(p(1-p) w^2) + E((p - pbar)^2 w^2)] / (n E(w)^2)`,
/// `pbar = E(w p) / E(w)`.
pub fn var_xdep<T: Real>(bins: &[XBin<T>], n: T) -> Result<T> {
    if bins.len() < 2 {
        return Err(Error::domain("var_xdep", format!("need at least 2 bins, got {}", bins.len())));
    }
    check_positive("var_xdep", "n", n)?;
    for (i, b) in bins.iter().enumerate() {
        if b.count == 0 {
            return Err(Error::domain("var_xdep", format!("bin {i} is empty")));
        }
        check_prob("var_xdep", b.p)?;
        if !(b.w > T::zero() && b.w.is_finite()) {
            return Err(Error::domain("var_xdep", format!("bin {i} has weight {}", b.w)));
        }
    }
    let mut total = KahanSum::new();
    let mut sum_w = KahanSum::new();
    let mut sum_wp = KahanSum::new();
    for b in bins {
        let c = T::lit(b.count as f64);
        total.add(c);
        sum_w.add(c * b.w);
        sum_wp.add(c * b.w * b.p);
    }
    let (total, sum_w) = (total.total(), sum_w.total());
    let p_bar = sum_wp.total() / sum_w;
    let mut binomial_term = KahanSum::new();
    let mut spread_term = KahanSum::new();
    for b in bins {
        let c = T::lit(b.count as f64);
        let w2 = b.w * b.w;
        binomial_term.add(c * b.p * (T::one() - b.p) * w2);
        let d = b.p - p_bar;
        spread_term.add(c * d * d * w2);
    }
    let mean_w = sum_w / total;
    Ok((binomial_term.total() + spread_term.total()) / (n * mean_w * mean_w * total))
}

/// Extra standard deviation of a fitted count beyond its Poisson floor,
/// `sqrt(var(n_k) - n_k)`.
pub fn sigma_b<T: Real>(var_nk: T, nk: T) -> Result<T> {
    if !(var_nk >= nk) {
        return Err(Error::domain(
            "sigma_b",
            format!("variance {var_nk} is below the Poisson floor {nk}"),
        ));
    }
    Ok((var_nk - nk).sqrt())
}

/// Which pair of counts an [`ExtraFluctuationInputs`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parameterization {
    /// Successes `n1` and failures `n2`.
    N1N2,
    /// Successes `n1` and total `n`.
    N1N,
}

/// Fitted counts with their variances and the correlation of the extra
/// (background) fluctuations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtraFluctuationInputs<T> {
    pub n1: T,
    /// `n2` in [`Parameterization::N1N2`], the total `n` in [`Parameterization::N1N`].
    pub n2_or_n: T,
    pub parameterization: Parameterization,
    pub var1: T,
    /// `var(n2)` or `var(n)`, matching `n2_or_n`.
    pub var2_or_varn: T,
    pub rho: T,
}

impl<T: Real> ExtraFluctuationInputs<T> {
    pub fn n1n2(n1: T, n2: T, var1: T, var2: T, rho: T) -> Self {
        Self {
            n1,
            n2_or_n: n2,
            parameterization: Parameterization::N1N2,
            var1,
            var2_or_varn: var2,
            rho,
        }
    }

    pub fn n1n(n1: T, n: T, var1: T, var_n: T, rho: T) -> Self {
        Self {
            n1,
            n2_or_n: n,
            parameterization: Parameterization::N1N,
            var1,
            var2_or_varn: var_n,
            rho,
        }
    }

    pub fn total(&self) -> T {
        match self.parameterization {
            Parameterization::N1N2 => self.n1 + self.n2_or_n,
            Parameterization::N1N => self.n2_or_n,
        }
    }

    pub fn p_hat(&self) -> T {
        self.n1 / self.total()
    }

    pub fn validate(&self) -> Result<()> {
        const OP: &str = "var_extra";
        check_positive(OP, "n1", self.n1)?;
        check_positive(OP, "n2_or_n", self.n2_or_n)?;
        if !(self.rho >= -T::one() && self.rho <= T::one()) {
            return Err(Error::domain(OP, format!("rho must lie in [-1, 1], got {}", self.rho)));
        }
        if !(self.var1 >= self.n1) {
            return Err(Error::domain(
                OP,
                format!("var1 = {} is below the Poisson floor n1 = {}", self.var1, self.n1),
            ));
        }
        match self.parameterization {
            Parameterization::N1N2 => {
                if !(self.var2_or_varn >= self.n2_or_n) {
                    return Err(Error::domain(
                        OP,
                        format!(
                            "var2 = {} is below the Poisson floor n2 = {}",
                            self.var2_or_varn, self.n2_or_n
                        ),
                    ));
                }
            }
            Parameterization::N1N => {
                if !(self.n2_or_n > self.n1) {
                    return Err(Error::domain(
                        OP,
                        format!("total n = {} must exceed n1 = {}", self.n2_or_n, self.n1),
                    ));
                }
                if !(self.var2_or_varn.is_finite() && self.var2_or_varn > T::zero()) {
                    return Err(Error::domain(
                        OP,
                        format!("var_n must be positive, got {}", self.var2_or_varn),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Squared extra spreads `(sigma_1b^2, sigma_2b^2)` implied by the inputs.
    ///
    /// In the `(n1, n)` parameterization, `sigma_2b` is reconstructed from
    /// `var(n) = n + s1^2 + s2^2 + 2 rho s1 s2`; `None` if that has no real solution.
    pub fn extra_variances(&self) -> Option<(T, T)> {
        let s1_sq = self.var1 - self.n1;
        match self.parameterization {
            Parameterization::N1N2 => Some((s1_sq, self.var2_or_varn - self.n2_or_n)),
            Parameterization::N1N => {
                let r = self.n1n_radicand();
                if r < T::zero() {
                    return None;
                }
                let s2 = r.sqrt() - self.rho * s1_sq.sqrt();
                if s2 < T::zero() {
                    return None;
                }
                Some((s1_sq, s2 * s2))
            }
        }
    }

    fn n1n_radicand(&self) -> T {
        let s1_sq = self.var1 - self.n1;
        self.rho * self.rho * s1_sq + self.var2_or_varn - self.n2_or_n + self.n1 - self.var1
    }
}

/// Result of [`var_extra`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtraVariance<T> {
    pub value: T,
    /// Set when sample estimates of the inputs are mutually inconsistent (only
    /// possible in the `(n1, n)` parameterization). The value may then be
    /// negative; it is returned unclamped.
    pub fluctuation_artifact: bool,
}

/// Variance of the efficiency estimate for counts with extra fluctuations,
/// to second order in the fluctuations.
///
/// With `(n1, n2)` and correlation `rho` of the extra parts:
/// `[n1^2 var2 + n2^2 var1 - 2 rho n1 n2 s1 s2] / (n1 + n2)^4`, where
/// `s_k = sqrt(var_k - n_k)`. With `(n1, n)`:
/// `[n^2 var1 + var_n n1^2 - 2 n n1 var1] / n^4` plus a `rho`-dependent term.
pub fn var_extra<T: Real>(inputs: &ExtraFluctuationInputs<T>) -> Result<ExtraVariance<T>> {
    inputs.validate()?;
    let two = T::lit(2.0);
    let ExtraFluctuationInputs {
        n1,
        n2_or_n,
        var1,
        var2_or_varn,
        rho,
        ..
    } = *inputs;
    match inputs.parameterization {
        Parameterization::N1N2 => {
            let n2 = n2_or_n;
            let var2 = var2_or_varn;
            let n = n1 + n2;
            let n4 = n * n * n * n;
            let mut value = (n1 * n1 * var2 + n2 * n2 * var1) / n4;
            if rho != T::zero() {
                let s1 = (var1 - n1).sqrt();
                let s2 = (var2 - n2).sqrt();
                value = value - two * rho * n1 * n2 * s1 * s2 / n4;
            }
            Ok(ExtraVariance {
                value,
                fluctuation_artifact: false,
            })
        }
        Parameterization::N1N => {
            let n = n2_or_n;
            let var_n = var2_or_varn;
            let n3 = n * n * n;
            let n4 = n3 * n;
            let radicand = inputs.n1n_radicand();
            let mut value = (n * n * var1 + var_n * n1 * n1 - two * n * n1 * var1) / n4;
            if rho != T::zero() {
                if radicand < T::zero() {
                    return Err(Error::domain(
                        "var_extra",
                        format!(
                            "var_n = {var_n} is inconsistent with var1 = {var1} and rho = {rho}: \
                             no real extra spread for the failures"
                        ),
                    ));
                }
                let s1_sq = var1 - n1;
                value = value + two * rho * n1 / n3 * (rho * s1_sq - s1_sq.sqrt() * radicand.sqrt());
            }
            Ok(ExtraVariance {
                value,
                fluctuation_artifact: radicand < T::zero() || value < T::zero(),
            })
        }
    }
}
