//! The arithmetic interface metric evaluators are written against.
//!
//! Implemented by `f64` (plain evaluation) and by [`crate::jet::Jet`]
//! (truncated Taylor expansion). Partial operations report a [`DomainFault`]
//! instead of producing NaN.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DomainFault {
    #[error("square root of a negative number")]
    SqrtNegative,
    #[error("square root is not differentiable at 0")]
    SqrtAtZero,
    #[error("division by zero")]
    DivisionByZero,
    #[error("power of a negative base with a non-integer exponent")]
    PowNegativeBase,
    #[error("fractional power is not differentiable at 0")]
    PowAtZero,
    #[error("abs is not differentiable at 0")]
    AbsAtZero,
    #[error("non-finite intermediate value")]
    NonFinite,
}

pub trait Field: Clone {
    /// A constant living in the same space as `self`.
    fn lift(&self, c: f64) -> Self;
    fn value(&self) -> f64;
    fn add(&self, rhs: &Self) -> Self;
    fn sub(&self, rhs: &Self) -> Self;
    fn mul(&self, rhs: &Self) -> Self;
    fn neg(&self) -> Self;
    fn div(&self, rhs: &Self) -> Result<Self, DomainFault>;
    fn sqrt(&self) -> Result<Self, DomainFault>;
    fn pow(&self, exponent: f64) -> Result<Self, DomainFault>;
    fn abs(&self) -> Result<Self, DomainFault>;
}

pub(crate) fn is_integer(r: f64) -> bool {
    r.fract() == 0.0 && r.abs() < i32::MAX as f64
}

fn finite(v: f64) -> Result<f64, DomainFault> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(DomainFault::NonFinite)
    }
}

impl Field for f64 {
    fn lift(&self, c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn neg(&self) -> Self {
        -self
    }
    fn div(&self, rhs: &Self) -> Result<Self, DomainFault> {
        if *rhs == 0.0 {
            return Err(DomainFault::DivisionByZero);
        }
        finite(self / rhs)
    }
    fn sqrt(&self) -> Result<Self, DomainFault> {
        if *self < 0.0 {
            return Err(DomainFault::SqrtNegative);
        }
        Ok(f64::sqrt(*self))
    }
    fn pow(&self, exponent: f64) -> Result<Self, DomainFault> {
        if is_integer(exponent) {
            if *self == 0.0 && exponent < 0.0 {
                return Err(DomainFault::DivisionByZero);
            }
            return finite(self.powi(exponent as i32));
        }
        if *self < 0.0 {
            return Err(DomainFault::PowNegativeBase);
        }
        if *self == 0.0 && exponent < 0.0 {
            return Err(DomainFault::DivisionByZero);
        }
        finite(self.powf(exponent))
    }
    fn abs(&self) -> Result<Self, DomainFault> {
        Ok(f64::abs(*self))
    }
}
