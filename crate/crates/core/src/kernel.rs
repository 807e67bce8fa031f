//! Probability primitives: pmfs, the Beta quantile and the level-to-z map.

use crate::special::{beta_pdf, inc_beta, ln_beta, ln_factorial, normal_quantile};
use crate::{Error, Real, Result};

const BETA_QUANTILE_MAX_ITER: usize = 300;

/// Largest `k` evaluated in linear space by [`pmf_poisson`].
const POISSON_DIRECT_MAX_K: u64 = 20;

/// Largest `n` evaluated in linear space by [`pmf_binomial`].
const BINOMIAL_DIRECT_MAX_N: u64 = 30;

/// Poisson probability `e^-mu mu^k / k!`.
pub fn pmf_poisson<T: Real>(k: u64, mu: T) -> Result<T> {
    if !(mu.is_finite() && mu > T::zero()) {
        return Err(Error::domain(
            "pmf_poisson",
            format!("mean must be finite and positive, got {mu}"),
        ));
    }
    if k <= POISSON_DIRECT_MAX_K {
        let mut term = (-mu).exp();
        for i in 1..=k {
            term = term * mu / T::lit(i as f64);
        }
        if term.is_finite() && term > T::zero() {
            return Ok(term);
        }
    }
    Ok(ln_pmf_poisson(k, mu).exp())
}

#[inline]
pub(crate) fn ln_pmf_poisson<T: Real>(k: u64, mu: T) -> T {
    T::lit(k as f64) * mu.ln() - mu - ln_factorial::<T>(k)
}

/// Binomial probability `C(n, k) p^k (1 - p)^(n - k)`, with `0^0 = 1`.
pub fn pmf_binomial<T: Real>(k: u64, n: u64, p: T) -> Result<T> {
    if k > n {
        return Err(Error::domain(
            "pmf_binomial",
            format!("successes {k} exceed trials {n}"),
        ));
    }
    if !(p >= T::zero() && p <= T::one()) {
        return Err(Error::domain(
            "pmf_binomial",
            format!("probability must lie in [0, 1], got {p}"),
        ));
    }
    if p == T::zero() {
        return Ok(if k == 0 { T::one() } else { T::zero() });
    }
    if p == T::one() {
        return Ok(if k == n { T::one() } else { T::zero() });
    }
    if n <= BINOMIAL_DIRECT_MAX_N {
        let m = k.min(n - k);
        let mut coeff = T::one();
        for i in 1..=m {
            coeff = coeff * T::lit((n - m + i) as f64) / T::lit(i as f64);
        }
        return Ok(coeff * p.powi(k as i32) * (T::one() - p).powi((n - k) as i32));
    }
    Ok(ln_pmf_binomial(k, n, p.ln(), (-p).ln_1p()).exp())
}

#[inline]
pub(crate) fn ln_pmf_binomial<T: Real>(k: u64, n: u64, ln_p: T, ln_q: T) -> T {
    ln_factorial::<T>(n) - ln_factorial::<T>(k) - ln_factorial::<T>(n - k)
        + T::lit(k as f64) * ln_p
        + T::lit((n - k) as f64) * ln_q
}

/// Smallest `N >= mu` whose Poisson upper tail `P(X > N)` is bounded by `tail`,
/// returned with the bound itself.
pub fn poisson_upper_cutoff(mu: f64, tail: f64) -> (u64, f64) {
    let mut n = mu.ceil().max(1.0) as u64;
    loop {
        let next = (n + 1) as f64;
        let ratio = mu / (next + 1.0);
        let bound = ln_pmf_poisson(n + 1, mu).exp() / (1.0 - ratio);
        if bound <= tail {
            return (n, bound);
        }
        n += 1;
    }
}

fn beta_quantile_guess<T: Real>(q: T, a: T, b: T) -> T {
    let one = T::one();
    let two = T::lit(2.0);
    if a >= one && b >= one {
        let pp = if q < T::lit(0.5) { q } else { one - q };
        let t = (-two * pp.ln()).sqrt();
        let mut x = (T::lit(2.307_53) + t * T::lit(0.270_61))
            / (one + t * (T::lit(0.992_29) + t * T::lit(0.044_81)))
            - t;
        if q < T::lit(0.5) {
            x = -x;
        }
        let al = (x * x - T::lit(3.0)) / T::lit(6.0);
        let h = two / (one / (two * a - one) + one / (two * b - one));
        let w = x * (al + h).sqrt() / h
            - (one / (two * b - one) - one / (two * a - one))
                * (al + T::lit(5.0 / 6.0) - two / (T::lit(3.0) * h));
        a / (a + b * (two * w).exp())
    } else {
        let lna = (a / (a + b)).ln();
        let lnb = (b / (a + b)).ln();
        let t = (a * lna).exp() / a;
        let u = (b * lnb).exp() / b;
        let w = t + u;
        if q < t / w {
            (a * w * q).powf(one / a)
        } else {
            one - (b * w * (one - q)).powf(one / b)
        }
    }
}

/// Quantile of the Beta(a, b) distribution: `x` with `I_x(a, b) = q`.
///
/// Newton iteration on the regularized incomplete beta, kept inside a
/// shrinking bisection bracket.
pub fn quantile_beta<T: Real>(q: T, a: T, b: T) -> Result<T> {
    if !(q >= T::zero() && q <= T::one()) {
        return Err(Error::domain(
            "quantile_beta",
            format!("probability must lie in [0, 1], got {q}"),
        ));
    }
    if !(a > T::zero() && b > T::zero() && a.is_finite() && b.is_finite()) {
        return Err(Error::domain(
            "quantile_beta",
            format!("shape parameters must be positive and finite, got a={a}, b={b}"),
        ));
    }
    if q == T::zero() {
        return Ok(T::zero());
    }
    if q == T::one() {
        return Ok(T::one());
    }
    let mut lo = T::zero();
    let mut hi = T::one();
    let mut x = beta_quantile_guess(q, a, b);
    if !(x > lo && x < hi) {
        x = T::lit(0.5);
    }
    let lnb = ln_beta(a, b);
    let rel = T::epsilon() * T::lit(4.0);
    for _ in 0..BETA_QUANTILE_MAX_ITER {
        let err = inc_beta(x, a, b) - q;
        if err == T::zero() {
            return Ok(x);
        }
        if err < T::zero() {
            lo = x;
        } else {
            hi = x;
        }
        let pdf = if a == T::one() && b == T::one() {
            T::one()
        } else {
            ((a - T::one()) * x.ln() + (b - T::one()) * (-x).ln_1p() - lnb).exp()
        };
        let mut next = x - err / pdf;
        if !(next.is_finite() && next > lo && next < hi) {
            next = lo + (hi - lo) * T::lit(0.5);
        }
        let step = (next - x).abs();
        x = next;
        if step <= rel * x || hi - lo <= rel * hi {
            return Ok(x);
        }
    }
    if hi - lo <= T::lit(1e-10) {
        return Ok(lo + (hi - lo) * T::lit(0.5));
    }
    Err(Error::NoConvergence {
        op: "quantile_beta",
        iterations: BETA_QUANTILE_MAX_ITER,
        lo: lo.as_f64(),
        hi: hi.as_f64(),
    })
}

/// CDF of Beta(a, b).
pub fn cdf_beta<T: Real>(x: T, a: T, b: T) -> T {
    inc_beta(x, a, b)
}

/// Density of Beta(a, b).
pub fn pdf_beta<T: Real>(x: T, a: T, b: T) -> T {
    beta_pdf(x, a, b)
}

/// Two-sided standard-normal critical value for a central confidence level.
///
/// Equals the standard-normal quantile at `(1 + level) / 2`, i.e. the square
/// root of the chi-square(1) quantile at `level`.
pub fn z_from_level<T: Real>(level: T) -> Result<T> {
    if !(level > T::zero() && level < T::one()) {
        return Err(Error::domain(
            "z_from_level",
            format!("level must lie in (0, 1), got {level}"),
        ));
    }
    let half_alpha = (T::one() - level) * T::lit(0.5);
    Ok(-normal_quantile(half_alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn poisson_examples() {
        assert_abs_diff_eq!(pmf_poisson(0, 1.0).unwrap(), (-1.0f64).exp(), epsilon = 1e-16);
        assert_abs_diff_eq!(pmf_poisson(1, 3.0).unwrap(), 0.149_361_205_103_591_83, epsilon = 1e-15);
        // summed recurrence from k = 0: e^-100 underflows nothing, ratios are exact
        let mut term = (-100.0f64).exp();
        for i in 1..=100 {
            term *= 100.0 / i as f64;
        }
        let got = pmf_poisson(100, 100.0).unwrap();
        assert_abs_diff_eq!(got, term, epsilon = 1e-14);
        assert_abs_diff_eq!(got, 0.039_860_996_809_148_83, epsilon = 1e-12);
    }

    #[test]
    fn poisson_rejects_bad_mean() {
        assert!(pmf_poisson(1, 0.0).is_err());
        assert!(pmf_poisson(1, -1.0).is_err());
        assert!(pmf_poisson(1, f64::NAN).is_err());
        assert!(pmf_poisson(1, f64::INFINITY).is_err());
    }

    #[test]
    fn poisson_normalized() {
        for &mu in &[0.1, 1.0, 3.7, 25.0, 400.0, 1000.0] {
            let top = (mu + 20.0 * f64::sqrt(mu)).ceil() as u64;
            let s: f64 = (0..=top).map(|k| pmf_poisson(k, mu).unwrap()).sum();
            assert!((1.0 - 1e-9..=1.0 + 1e-12).contains(&s), "mu={mu} sum={s}");
        }
    }

    #[test]
    fn binomial_examples() {
        assert_abs_diff_eq!(pmf_binomial(5, 10, 0.5).unwrap(), 252.0 / 1024.0, epsilon = 1e-15);
        assert_eq!(pmf_binomial(0, 7, 0.0).unwrap(), 1.0);
        assert_eq!(pmf_binomial(3, 3, 1.0).unwrap(), 1.0);
        assert_eq!(pmf_binomial(2, 3, 1.0).unwrap(), 0.0);
        assert!(pmf_binomial(4, 3, 0.5).is_err());
        assert!(pmf_binomial(1, 3, 1.5).is_err());
    }

    #[test]
    fn binomial_normalized() {
        for n in [1u64, 2, 7, 30, 31, 64, 150, 200] {
            for &p in &[1e-3, 0.1, 0.37, 0.5, 0.9, 0.999] {
                let s: f64 = (0..=n).map(|k| pmf_binomial(k, n, p).unwrap()).sum();
                assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn quantile_beta_examples() {
        assert_abs_diff_eq!(quantile_beta(0.5, 1.0, 1.0).unwrap(), 0.5, epsilon = 1e-12);
        let closed = 1.0 - 0.025f64.powf(0.1);
        assert_abs_diff_eq!(quantile_beta(0.975, 1.0, 10.0).unwrap(), closed, epsilon = 1e-10);
        assert_abs_diff_eq!(closed, 0.3085, epsilon = 5e-5);
        assert!(quantile_beta(1.2, 1.0, 1.0).is_err());
        assert!(quantile_beta(0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn quantile_beta_against_statrs() {
        use statrs::distribution::{Beta, ContinuousCDF};
        for &(a, b) in &[(0.5, 10.5), (1.0, 11.0), (6.0, 6.0), (5.5, 0.5), (40.0, 3.0)] {
            let d = Beta::new(a, b).unwrap();
            for &q in &[0.001, 0.025, 0.158_655, 0.5, 0.841_345, 0.975] {
                let ours = quantile_beta(q, a, b).unwrap();
                assert_abs_diff_eq!(ours, d.inverse_cdf(q), epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn z_examples() {
        let one_sigma = 0.682_689_492_137_085_9;
        assert_abs_diff_eq!(z_from_level(one_sigma).unwrap(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(z_from_level(0.682_689_5).unwrap(), 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(z_from_level(0.95).unwrap(), 1.959_963_984_540_054, epsilon = 1e-10);
        assert_abs_diff_eq!(z_from_level(0.5).unwrap(), 0.674_489_750_196_081_7, epsilon = 1e-10);
        assert!(z_from_level(0.0).is_err());
        assert!(z_from_level(1.0).is_err());
    }

    #[test]
    fn z_matches_chi_square_quantile() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let chi = ChiSquared::new(1.0).unwrap();
        for &level in &[0.1, 0.5, 0.6827, 0.9, 0.99] {
            let z: f64 = z_from_level(level).unwrap();
            assert_abs_diff_eq!(z * z, chi.inverse_cdf(level), epsilon = 1e-8);
        }
    }

    #[test]
    fn poisson_cutoff_bounds_tail() {
        for &mu in &[0.5, 5.0, 50.0, 400.0] {
            let (n, bound) = poisson_upper_cutoff(mu, 1e-10);
            assert!(bound <= 1e-10);
            let tail: f64 = (n + 1..n + 2000).map(|k| pmf_poisson(k, mu).unwrap()).sum();
            assert!(tail <= bound * (1.0 + 1e-9));
        }
    }

    proptest! {
        #[test]
        fn quantile_round_trips(q in 0.0f64..1.0, a in 0.2f64..60.0, b in 0.2f64..60.0) {
            let x = quantile_beta(q, a, b).unwrap();
            prop_assert!((0.0..=1.0).contains(&x));
            prop_assert!((inc_beta(x, a, b) - q).abs() < 1e-8);
        }

        #[test]
        fn quantile_reflection(q in 0.001f64..0.999, a in 0.3f64..30.0, b in 0.3f64..30.0) {
            let x = quantile_beta(q, a, b).unwrap();
            let y = quantile_beta(1.0 - q, b, a).unwrap();
            prop_assert!((x - (1.0 - y)).abs() < 1e-9);
        }

        #[test]
        fn quantile_monotone(q1 in 0.0f64..1.0, q2 in 0.0f64..1.0, a in 0.3f64..30.0, b in 0.3f64..30.0) {
            let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
            prop_assert!(quantile_beta(lo, a, b).unwrap() <= quantile_beta(hi, a, b).unwrap() + 1e-12);
        }
    }
}
