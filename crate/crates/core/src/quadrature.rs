//! Adaptive Simpson quadrature.

use crate::{Error, Real, Result};

const MAX_DEPTH: u32 = 50;

/// Integrates `f` over `[lo, hi]` to relative tolerance `rel_tol`.
pub fn integrate<T: Real, F: Fn(T) -> T>(f: F, lo: T, hi: T, rel_tol: T) -> Result<T> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::domain("integrate", format!("bad interval [{lo}, {hi}]")));
    }
    let two = T::lit(2.0);
    // coarse pass sets the absolute scale for the tolerance
    let panels = 16;
    let width = (hi - lo) / T::lit(panels as f64);
    let mut coarse = T::zero();
    let mut pieces = Vec::with_capacity(panels);
    for i in 0..panels {
        let a = lo + width * T::lit(i as f64);
        let b = if i + 1 == panels { hi } else { a + width };
        let m = (a + b) / two;
        let (fa, fm, fb) = (f(a), f(m), f(b));
        let s = (b - a) / T::lit(6.0) * (fa + T::lit(4.0) * fm + fb);
        coarse = coarse + s.abs();
        pieces.push((a, b, fa, fm, fb, s));
    }
    let abs_tol = (rel_tol * coarse).max(T::min_positive_value());
    let per_piece = abs_tol / T::lit(panels as f64);
    let mut total = T::zero();
    for (a, b, fa, fm, fb, s) in pieces {
        total = total + simpson(&f, a, b, fa, fm, fb, s, per_piece, MAX_DEPTH);
    }
    if !total.is_finite() {
        return Err(Error::domain("integrate", "integrand is not finite"));
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn simpson<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T, fa: T, fm: T, fb: T, whole: T, tol: T, depth: u32) -> T {
    let two = T::lit(2.0);
    let m = (a + b) / two;
    let lm = (a + m) / two;
    let rm = (m + b) / two;
    let (flm, frm) = (f(lm), f(rm));
    let six = T::lit(6.0);
    let left = (m - a) / six * (fa + T::lit(4.0) * flm + fm);
    let right = (b - m) / six * (fm + T::lit(4.0) * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= T::lit(15.0) * tol {
        return left + right + delta / T::lit(15.0);
    }
    simpson(f, a, m, fa, flm, fm, left, tol / two, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, tol / two, depth - 1)
}
