//! Minimal ordered-field abstraction so the parameter calculus can run in
//! `f64` or in exact rationals.

use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Signed, ToPrimitive};

pub trait Scalar: Clone + PartialOrd + Debug + Display + Signed + Send + Sync + 'static {
    fn from_i64(k: i64) -> Self;
    fn floor(&self) -> Self;
    fn to_f64(&self) -> f64;

    fn is_integer(&self) -> bool {
        self.floor() == *self
    }

    fn max_of(a: Self, b: Self) -> Self {
        if a >= b {
            a
        } else {
            b
        }
    }

    fn min_of(a: Self, b: Self) -> Self {
        if a <= b {
            a
        } else {
            b
        }
    }

    /// `x_+ = max(x, 0)`.
    fn pos(&self) -> Self {
        Self::max_of(self.clone(), Self::zero())
    }

    /// `x_- = max(-x, 0)`.
    fn neg_part(&self) -> Self {
        Self::max_of(-self.clone(), Self::zero())
    }

    fn recip(&self) -> Self {
        Self::one() / self.clone()
    }
}

impl Scalar for f64 {
    fn from_i64(k: i64) -> Self {
        k as f64
    }
    fn floor(&self) -> Self {
        f64::floor(*self)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for BigRational {
    fn from_i64(k: i64) -> Self {
        BigRational::from_integer(BigInt::from(k))
    }
    fn floor(&self) -> Self {
        BigRational::floor(self)
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Exact rational from a finite `f64` (every finite double is a dyadic rational).
pub fn rational(x: f64) -> BigRational {
    BigRational::from_f64(x).expect("finite value")
}

/// `a / b` as an exact rational.
pub fn ratio(a: i64, b: i64) -> BigRational {
    BigRational::new(BigInt::from(a), BigInt::from(b))
}
