//! Selection-efficiency estimation with honest error bars.
//!
//! The crate covers four sampling regimes for an efficiency `p = n1 / (n1 + n2)`:
//! fixed-total binomial counts, Poisson-distributed totals, weighted samples
//! (optionally with an event covariate `x`), and counts carrying extra
//! fluctuations beyond the Poisson floor. For each regime it provides point
//! estimators, variance formulas, generalized Wilson intervals, and the
//! classical alternatives (Clopper-Pearson, normal approximation, Bayesian
//! Beta-posterior intervals), together with tools to measure their coverage by
//! exact enumeration or seeded Monte Carlo.
//!
//! All closed-form math is generic over [`Real`] (`f32` or `f64`). The
//! `*64` aliases at the crate root fix the scalar to `f64`, which is what the
//! Monte-Carlo studies use.

pub mod coverage;
pub mod error;
pub mod estimators;
pub mod intervals;
pub mod kernel;
pub mod quadrature;
pub mod rng;
pub mod special;
pub mod summation;
pub mod variance;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive};

pub use coverage::simulate::{
    scan_grid_mc, simulate_extra, simulate_poisson_trials, simulate_weighted_variance,
    simulate_xdep, ExtraStudy, McMethod, PoissonTrialsStudy, ScenarioExtra, WeightDist,
    WeightedVarianceStudy, XdepConfig, XdepStudy,
};
pub use coverage::{
    average_coverage, coverage_binomial, coverage_poisson, scan_grid, CoverageCell, CoverageMode,
    IntervalTable, PoissonCoverage, Sampling,
};
pub use error::{Error, Result};
pub use estimators::{
    bias_curve, binned_xdep_variance, bootstrap_variance, BiasPoint, effective_efficiency_target, estimate, estimate_weighted,
    EfficiencyCounts, WeightedEntry, WeightedEstimate, WeightedObservations, XdepScenario,
};
pub use intervals::{
    bayesian, clopper_pearson, normal_approx, normal_approx_with_variance, wilson, wilson_extra,
    wilson_poisson, wilson_weighted, Interval, Method, MethodTag, PriorKind,
};
pub use kernel::{pmf_binomial, pmf_poisson, quantile_beta, z_from_level};
pub use rng::{Dist, RngStream};
pub use variance::{
    effective_count, f_approx, f_exact, f_large_n, f_of, f_small_n, q_log, sigma_b, var_binomial,
    var_extra, var_poisson_trials, var_weighted, var_xdep, ExtraFluctuationInputs, ExtraVariance,
    FnMode, Parameterization, XBin,
};

/// Floating-point scalar accepted by the generic parts of the crate.
pub trait Real:
    Float + FloatConst + FromPrimitive + Debug + Display + Default + Send + Sync + Sum + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Working tolerance for iterative solvers: 1e-12 in `f64`, a few ulps in `f32`.
    #[inline]
    fn solver_tol() -> Self {
        Self::lit(1e-12).max(Self::epsilon() * Self::lit(16.0))
    }

    /// Lossy conversion used for error payloads and diagnostics.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type Interval64 = Interval<f64>;
pub type Interval32 = Interval<f32>;
pub type WeightedObservations64 = WeightedObservations<f64>;
pub type WeightedEstimate64 = WeightedEstimate<f64>;
pub type ExtraFluctuationInputs64 = ExtraFluctuationInputs<f64>;
