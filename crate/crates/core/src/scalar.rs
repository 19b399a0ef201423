//! Scalar rings used as jet coefficients.
//!
//! `f64` is the plain case. [`Dual`] carries a first-order gradient and is
//! nested inside jets when one more derivative is needed on top of what the
//! jet itself truncates to (x-derivatives of connection coefficients, the
//! Jacobian of the geodesic spray).

use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

use smallvec::SmallVec;

pub trait Scalar:
    Clone
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
{
    /// A constant with the same shape as `self` (gradient length for duals).
    fn lift(&self, c: f64) -> Self;
    fn value(&self) -> f64;
    fn scale(&self, c: f64) -> Self;
    fn powf(&self, r: f64) -> Self;
    fn powi(&self, k: i32) -> Self;
    fn is_exact_zero(&self) -> bool;

    fn recip(&self) -> Self {
        self.powi(-1)
    }
}

impl Scalar for f64 {
    fn lift(&self, c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn scale(&self, c: f64) -> Self {
        self * c
    }
    fn powf(&self, r: f64) -> Self {
        f64::powf(*self, r)
    }
    fn powi(&self, k: i32) -> Self {
        f64::powi(*self, k)
    }
    fn is_exact_zero(&self) -> bool {
        *self == 0.0
    }
    fn recip(&self) -> Self {
        1.0 / self
    }
}

/// First-order forward-mode number: `value + Σ grad[i] ε_i` with `ε_i ε_j = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dual {
    pub value: f64,
    pub grad: SmallVec<[f64; 8]>,
}

impl Dual {
    pub fn constant(value: f64, width: usize) -> Self {
        Dual {
            value,
            grad: SmallVec::from_elem(0.0, width),
        }
    }

    /// The `index`-th independent variable out of `width`.
    pub fn variable(value: f64, index: usize, width: usize) -> Self {
        let mut d = Self::constant(value, width);
        d.grad[index] = 1.0;
        d
    }

    pub fn width(&self) -> usize {
        self.grad.len()
    }

    fn chain(&self, value: f64, slope: f64) -> Self {
        Dual {
            value,
            grad: self.grad.iter().map(|g| g * slope).collect(),
        }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(mut self, rhs: Dual) -> Dual {
        self.value += rhs.value;
        for (a, b) in self.grad.iter_mut().zip(&rhs.grad) {
            *a += b;
        }
        self
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(mut self, rhs: Dual) -> Dual {
        self.value -= rhs.value;
        for (a, b) in self.grad.iter_mut().zip(&rhs.grad) {
            *a -= b;
        }
        self
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        let (u, v) = (self.value, rhs.value);
        Dual {
            value: u * v,
            grad: self
                .grad
                .iter()
                .zip(&rhs.grad)
                .map(|(a, b)| a * v + u * b)
                .collect(),
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(mut self) -> Dual {
        self.value = -self.value;
        for g in self.grad.iter_mut() {
            *g = -*g;
        }
        self
    }
}

impl Scalar for Dual {
    fn lift(&self, c: f64) -> Self {
        Dual::constant(c, self.width())
    }
    fn value(&self) -> f64 {
        self.value
    }
    fn scale(&self, c: f64) -> Self {
        self.chain(self.value * c, c)
    }
    fn powf(&self, r: f64) -> Self {
        let v = self.value;
        self.chain(v.powf(r), r * v.powf(r - 1.0))
    }
    fn powi(&self, k: i32) -> Self {
        let v = self.value;
        let slope = if k == 0 {
            0.0
        } else {
            k as f64 * v.powi(k - 1)
        };
        self.chain(v.powi(k), slope)
    }
    fn is_exact_zero(&self) -> bool {
        self.value == 0.0 && self.grad.iter().all(|g| *g == 0.0)
    }
    fn recip(&self) -> Self {
        let v = self.value;
        self.chain(1.0 / v, -1.0 / (v * v))
    }
}
