//! Scalar abstraction shared by the distribution, feasibility and APA code.
//!
//! Everything that only needs field arithmetic is written against [`Scalar`],
//! so the same routines run on `f64` for simulation, on `f32` for compact
//! tables, and on [`Exact`] (arbitrary-precision rationals) for oracle checks
//! where rounding must not hide a facet violation.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::binomial::{binomial_exact, binomial_log};

/// Exact rational scalar.
pub type Exact = BigRational;

pub trait Scalar: Clone + Debug + PartialOrd + Signed + Send + Sync + 'static {
    /// `true` when arithmetic is exact and every tolerance is zero.
    const EXACT: bool;

    fn from_usize(n: usize) -> Self;

    /// Conversion from a double. Exact scalars take the binary value verbatim.
    fn from_f64(x: f64) -> Self;

    fn to_f64(&self) -> f64;

    /// `n choose r` in this scalar type. Float types go through log space so
    /// the result saturates instead of overflowing an intermediate integer.
    fn binomial(n: usize, r: usize) -> Self;

    /// Slack allowed on `sum(mass) == 1` for freshly constructed distributions.
    fn sum_tolerance() -> Self;

    /// Slack allowed on each feasibility inequality.
    fn slack_tolerance() -> Self;

    /// Slack allowed between equal-size XOR-set probabilities.
    fn uniformity_tolerance() -> Self;

    fn ratio(num: usize, den: usize) -> Self {
        Self::from_usize(num) / Self::from_usize(den)
    }

    /// `max(self, 0)`.
    fn clamp_nonneg(self) -> Self {
        if self < Self::zero() {
            Self::zero()
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_usize(n: usize) -> Self {
        n as f64
    }

    fn from_f64(x: f64) -> Self {
        x
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn binomial(n: usize, r: usize) -> Self {
        binomial_log(n as u64, r as u64).map_or(0.0, f64::exp)
    }

    fn sum_tolerance() -> Self {
        1e-12
    }

    fn slack_tolerance() -> Self {
        1e-12
    }

    fn uniformity_tolerance() -> Self {
        1e-10
    }
}

impl Scalar for f32 {
    const EXACT: bool = false;

    fn from_usize(n: usize) -> Self {
        n as f32
    }

    fn from_f64(x: f64) -> Self {
        x as f32
    }

    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }

    fn binomial(n: usize, r: usize) -> Self {
        binomial_log(n as u64, r as u64).map_or(0.0, |l| l.exp() as f32)
    }

    // Single precision carries ~7 digits; the double-precision tolerances
    // would reject every non-trivial distribution.
    fn sum_tolerance() -> Self {
        1e-5
    }

    fn slack_tolerance() -> Self {
        1e-6
    }

    fn uniformity_tolerance() -> Self {
        1e-5
    }
}

impl Scalar for Exact {
    const EXACT: bool = true;

    fn from_usize(n: usize) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }

    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).expect("finite value")
    }

    fn to_f64(&self) -> f64 {
        // Ratio::to_f64 handles numerators/denominators beyond f64 range.
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn binomial(n: usize, r: usize) -> Self {
        BigRational::from_integer(binomial_exact(n as u64, r as u64))
    }

    fn sum_tolerance() -> Self {
        Self::zero()
    }

    fn slack_tolerance() -> Self {
        Self::zero()
    }

    fn uniformity_tolerance() -> Self {
        Self::zero()
    }
}

/// Convenience for building exact rationals in tests and constructors.
pub fn exact(num: i64, den: i64) -> Exact {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}
