//! Scalar abstraction shared by the floating and exact-rational evaluation paths.
//!
//! Every inequality in the existence/nonexistence theory is a rational
//! function of (n, m, δ₁, δ₂, p, q), so the same formula code runs on `f64`
//! and on [`Q`] (arbitrary-precision rationals).

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Exact rational number.
pub type Q = BigRational;

/// Field operations needed by the closed-form formulas.
pub trait Scalar:
    Clone
    + Debug
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn int(v: i64) -> Self;
    fn ratio(num: i64, den: i64) -> Self;
    fn to_f64(&self) -> f64;
    fn is_zero_value(&self) -> bool;

    fn zero() -> Self {
        Self::int(0)
    }
    fn one() -> Self {
        Self::int(1)
    }
    fn abs_value(&self) -> Self {
        if *self < Self::zero() {
            -self.clone()
        } else {
            self.clone()
        }
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
}

impl Scalar for f64 {
    fn int(v: i64) -> Self {
        v as f64
    }
    fn ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn is_zero_value(&self) -> bool {
        *self == 0.0
    }
}

impl Scalar for Q {
    fn int(v: i64) -> Self {
        Q::from_integer(BigInt::from(v))
    }
    fn ratio(num: i64, den: i64) -> Self {
        Q::new(BigInt::from(num), BigInt::from(den))
    }
    fn to_f64(&self) -> f64 {
        // numerator and denominator may overflow f64 separately
        ToPrimitive::to_f64(self).unwrap_or_else(|| {
            let n = self.numer().to_f64().unwrap_or(f64::NAN);
            let d = self.denom().to_f64().unwrap_or(f64::NAN);
            n / d
        })
    }
    fn is_zero_value(&self) -> bool {
        self.is_zero()
    }
    fn abs_value(&self) -> Self {
        self.abs()
    }
}

/// `num/den` as an exact rational.
pub fn q(num: i64, den: i64) -> Q {
    Q::ratio(num, den)
}

/// Exact rational value of a finite `f64` (every finite double is dyadic).
pub fn q_from_f64(x: f64) -> Option<Q> {
    if !x.is_finite() {
        return None;
    }
    Q::from_float(x)
}

/// Sign of a rational: -1, 0, 1.
pub fn sign(x: &Q) -> i32 {
    if x.is_zero() {
        0
    } else if x.is_positive() {
        1
    } else {
        -1
    }
}

pub fn q_one() -> Q {
    <Q as One>::one()
}

/// The parameter tuple (n, m, δ₁, δ₂, p, q) over a [`Scalar`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamPoint<T> {
    pub n: u32,
    pub m: T,
    pub delta1: T,
    pub delta2: T,
    pub p: T,
    pub q: T,
}

impl<T: Scalar> ParamPoint<T> {
    pub fn new(n: u32, m: T, delta1: T, delta2: T, p: T, q: T) -> Self {
        Self { n, m, delta1, delta2, p, q }
    }

    /// n as a scalar.
    pub fn dim(&self) -> T {
        T::int(self.n as i64)
    }

    /// m₀ = 2m/(2−m).
    pub fn m0(&self) -> T {
        T::int(2) * self.m.clone() / (T::int(2) - self.m.clone())
    }

    /// Exchanges (δ₁, p) with (δ₂, q).
    pub fn swapped(&self) -> Self {
        Self {
            n: self.n,
            m: self.m.clone(),
            delta1: self.delta2.clone(),
            delta2: self.delta1.clone(),
            p: self.q.clone(),
            q: self.p.clone(),
        }
    }

    pub fn to_f64(&self) -> ParamPoint<f64> {
        ParamPoint {
            n: self.n,
            m: self.m.to_f64(),
            delta1: self.delta1.to_f64(),
            delta2: self.delta2.to_f64(),
            p: self.p.to_f64(),
            q: self.q.to_f64(),
        }
    }
}

impl ParamPoint<f64> {
    /// The exact dyadic rational carried by every field.
    pub fn to_exact(&self) -> Option<ParamPoint<Q>> {
        Some(ParamPoint {
            n: self.n,
            m: q_from_f64(self.m)?,
            delta1: q_from_f64(self.delta1)?,
            delta2: q_from_f64(self.delta2)?,
            p: q_from_f64(self.p)?,
            q: q_from_f64(self.q)?,
        })
    }
}

impl From<&crate::solver::SystemParams> for ParamPoint<f64> {
    fn from(s: &crate::solver::SystemParams) -> Self {
        ParamPoint::new(s.n, s.m, s.delta1, s.delta2, s.p, s.q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyadic_conversion_is_exact() {
        assert_eq!(q_from_f64(0.25).unwrap(), q(1, 4));
        assert_eq!(q_from_f64(-3.0).unwrap(), q(-3, 1));
        assert!(q_from_f64(f64::NAN).is_none());
        // 0.1 is not 1/10 in binary
        assert_ne!(q_from_f64(0.1).unwrap(), q(1, 10));
    }

    #[test]
    fn generic_arithmetic_agrees() {
        fn f<T: Scalar>(x: T) -> T {
            (x.clone() * x.clone() - T::one()) / (x + T::ratio(1, 2))
        }
        let exact = Scalar::to_f64(&f(q(3, 7)));
        let float = f(3.0 / 7.0);
        assert!((exact - float).abs() < 1e-15);
    }
}
