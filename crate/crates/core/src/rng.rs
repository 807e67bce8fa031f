//! Seeded, splittable random streams.
//!
//! An [`RngStream`] is a ChaCha8 keystream selected by `(seed, stream-id)`.
//! Two streams with the same pair produce identical draws on any thread;
//! distinct stream ids select non-overlapping keystreams. Parallel code derives
//! one child stream per work unit with [`RngStream::derive`], so results do not
//! depend on scheduling.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp, Poisson};

use crate::{Error, Result};

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Child stream for work unit `index`, positioned at its start.
    ///
    /// Independent of how many draws the parent has consumed. Children of one
    /// parent are pairwise distinct.
    pub fn derive(&self, index: u64) -> RngStream {
        RngStream::new(self.seed, splitmix64(self.stream ^ splitmix64(index)))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform index in `0..len`.
    #[inline]
    pub fn index(&mut self, len: usize) -> usize {
        self.inner.random_range(0..len)
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        p >= 1.0 || self.uniform() < p
    }

    pub fn poisson(&mut self, mean: f64) -> Result<u64> {
        if !(mean >= 0.0 && mean.is_finite()) {
            return Err(Error::domain("sample", format!("Poisson mean {mean} must be >= 0")));
        }
        if mean == 0.0 {
            return Ok(0);
        }
        let d = Poisson::new(mean).map_err(|e| Error::domain("sample", e.to_string()))?;
        Ok(d.sample(&mut self.inner) as u64)
    }

    pub fn binomial(&mut self, n: u64, p: f64) -> Result<u64> {
        let d = Binomial::new(n, p).map_err(|e| Error::domain("sample", e.to_string()))?;
        Ok(d.sample(&mut self.inner))
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> Result<f64> {
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(Error::domain("sample", format!("normal sd {sd} must be > 0")));
        }
        Ok(mean + sd * self.standard_normal())
    }

    /// Standard-normal draw.
    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(rand_distr::StandardNormal)
    }

    pub fn exponential(&mut self, mean: f64) -> Result<f64> {
        if !(mean > 0.0 && mean.is_finite()) {
            return Err(Error::domain("sample", format!("exponential mean {mean} must be > 0")));
        }
        let d = Exp::new(1.0 / mean).map_err(|e| Error::domain("sample", e.to_string()))?;
        Ok(d.sample(&mut self.inner))
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::domain("sample", format!("uniform bounds [{lo}, {hi}) are empty")));
        }
        Ok(lo + (hi - lo) * self.uniform())
    }
}

/// Distributions the studies draw from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dist {
    Poisson { mean: f64 },
    Binomial { n: u64, p: f64 },
    Bernoulli { p: f64 },
    Normal { mean: f64, sd: f64 },
    Exponential { mean: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Dist {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::domain("sample", msg));
        match *self {
            Dist::Poisson { mean } if !(mean >= 0.0 && mean.is_finite()) => {
                bad(format!("Poisson mean {mean} must be >= 0"))
            }
            Dist::Binomial { p, .. } | Dist::Bernoulli { p } if !(0.0..=1.0).contains(&p) => {
                bad(format!("probability {p} outside [0, 1]"))
            }
            Dist::Normal { sd, .. } if !(sd > 0.0 && sd.is_finite()) => {
                bad(format!("normal sd {sd} must be > 0"))
            }
            Dist::Exponential { mean } if !(mean > 0.0 && mean.is_finite()) => {
                bad(format!("exponential mean {mean} must be > 0"))
            }
            Dist::Uniform { lo, hi } if !(lo < hi && lo.is_finite() && hi.is_finite()) => {
                bad(format!("uniform bounds [{lo}, {hi}) are empty"))
            }
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Dist::Poisson { mean } | Dist::Normal { mean, .. } | Dist::Exponential { mean } => mean,
            Dist::Binomial { n, p } => n as f64 * p,
            Dist::Bernoulli { p } => p,
            Dist::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Dist::Poisson { mean } => mean,
            Dist::Binomial { n, p } => n as f64 * p * (1.0 - p),
            Dist::Bernoulli { p } => p * (1.0 - p),
            Dist::Normal { sd, .. } => sd * sd,
            Dist::Exponential { mean } => mean * mean,
            Dist::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
        }
    }

    /// Second raw moment `E[X^2]`.
    pub fn second_moment(&self) -> f64 {
        self.variance() + self.mean() * self.mean()
    }

    /// One draw; integer-valued distributions return exact integers as `f64`.
    pub fn sample(&self, rng: &mut RngStream) -> Result<f64> {
        match *self {
            Dist::Poisson { mean } => rng.poisson(mean).map(|k| k as f64),
            Dist::Binomial { n, p } => rng.binomial(n, p).map(|k| k as f64),
            Dist::Bernoulli { p } => {
                self.validate()?;
                Ok(if rng.bernoulli(p) { 1.0 } else { 0.0 })
            }
            Dist::Normal { mean, sd } => rng.normal(mean, sd),
            Dist::Exponential { mean } => rng.exponential(mean),
            Dist::Uniform { lo, hi } => rng.uniform_range(lo, hi),
        }
    }
}

/// Free-function form of [`Dist::sample`].
pub fn sample(rng: &mut RngStream, dist: &Dist) -> Result<f64> {
    dist.sample(rng)
}
