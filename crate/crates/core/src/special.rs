//! Special functions behind the probability kernel.
//!
//! Everything here is generic over [`Real`]. Accuracy targets are stated for
//! `f64`; `f32` instantiations are accurate to a few ulps of `f32`.

use crate::Real;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

const CF_MAX_ITER: usize = 2000;

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma<T: Real>(x: T) -> T {
    let half = T::lit(0.5);
    if x < half {
        // reflection
        let pi = T::PI();
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut a = T::lit(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a = a + T::lit(c) / (x + T::lit(i as f64));
    }
    let t = x + T::lit(LANCZOS_G) + half;
    half * (T::TAU()).ln() + (x + half) * t.ln() - t + a.ln()
}

/// `ln(k!)`. Exact products up to 170!, Lanczos beyond.
pub fn ln_factorial<T: Real>(k: u64) -> T {
    if k < 2 {
        return T::zero();
    }
    if k <= 170 {
        let mut f = 1.0f64;
        for i in 2..=k {
            f *= i as f64;
        }
        return T::lit(f.ln());
    }
    T::lit(ln_gamma(k as f64 + 1.0))
}

/// `ln B(a, b)`.
pub fn ln_beta<T: Real>(a: T, b: T) -> T {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Density of Beta(a, b) at `x`.
pub fn beta_pdf<T: Real>(x: T, a: T, b: T) -> T {
    if x <= T::zero() || x >= T::one() {
        return T::zero();
    }
    ((a - T::one()) * x.ln() + (b - T::one()) * (-x).ln_1p() - ln_beta(a, b)).exp()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf<T: Real>(a: T, b: T, x: T) -> T {
    let one = T::one();
    let tiny = T::min_positive_value() / T::epsilon();
    let eps = T::epsilon();
    let qab = a + b;
    let qap = a + one;
    let qam = a - one;
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = one / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = T::lit(m as f64);
        let m2 = m + m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        h = h * d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        let del = d * c;
        h = h * del;
        if (del - one).abs() <= eps {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn inc_beta<T: Real>(x: T, a: T, b: T) -> T {
    let one = T::one();
    if x <= T::zero() {
        return T::zero();
    }
    if x >= one {
        return one;
    }
    let ln_front = a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b);
    let front = ln_front.exp();
    if x < (a + one) / (a + b + T::lit(2.0)) {
        front * beta_cf(a, b, x) / a
    } else {
        one - front * beta_cf(b, a, one - x) / b
    }
}

/// Regularized lower incomplete gamma `P(a, x)` and upper `Q(a, x)`.
pub fn inc_gamma<T: Real>(a: T, x: T) -> (T, T) {
    let one = T::one();
    if x <= T::zero() {
        return (T::zero(), one);
    }
    let ln_front = a * x.ln() - x - ln_gamma(a);
    if x < a + one {
        // series
        let mut ap = a;
        let mut del = one / a;
        let mut sum = del;
        for _ in 0..CF_MAX_ITER {
            ap = ap + one;
            del = del * x / ap;
            sum = sum + del;
            if del.abs() < sum.abs() * T::epsilon() {
                break;
            }
        }
        let p = sum * ln_front.exp();
        (p, one - p)
    } else {
        // continued fraction
        let tiny = T::min_positive_value() / T::epsilon();
        let mut b = x + one - a;
        let mut c = one / tiny;
        let mut d = one / b;
        let mut h = d;
        for i in 1..=CF_MAX_ITER {
            let i = T::lit(i as f64);
            let an = -i * (i - a);
            b = b + T::lit(2.0);
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = one / d;
            let del = d * c;
            h = h * del;
            if (del - one).abs() <= T::epsilon() {
                break;
            }
        }
        let q = ln_front.exp() * h;
        (one - q, q)
    }
}

/// Complementary error function.
pub fn erfc<T: Real>(x: T) -> T {
    let half = T::lit(0.5);
    if x >= T::zero() {
        inc_gamma(half, x * x).1
    } else {
        T::one() + inc_gamma(half, x * x).0
    }
}

/// Standard-normal CDF.
pub fn normal_cdf<T: Real>(x: T) -> T {
    T::lit(0.5) * erfc(-x / T::SQRT_2())
}

/// Standard-normal density.
pub fn normal_pdf<T: Real>(x: T) -> T {
    (-(x * x) * T::lit(0.5)).exp() / (T::TAU()).sqrt()
}

/// Standard-normal quantile for `0 < p < 1`.
///
/// Acklam's rational approximation followed by Halley refinement against
/// [`normal_cdf`]. Upper-half arguments are folded into the lower tail.
pub fn normal_quantile<T: Real>(p: T) -> T {
    let half = T::lit(0.5);
    if p > half {
        return -normal_quantile(T::one() - p);
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let pf = p.as_f64();
    let x0 = if pf < 0.02425 {
        let q = (-2.0 * pf.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = pf - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    let mut x = T::lit(x0);
    for _ in 0..3 {
        let e = normal_cdf(x) - p;
        let u = e / normal_pdf(x);
        x = x - u / (T::one() + x * u * half);
    }
    x
}
