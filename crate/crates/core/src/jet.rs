//! Truncated multivariate Taylor polynomials ("jets") over the natural
//! coordinates `(x, y)` of the tangent bundle.
//!
//! A [`JetLayout`] fixes which monomials are kept: at most `max_x` total
//! degree in the x-variables, `max_y` in the y-variables and `max_total`
//! overall. The kept set is closed under taking divisors, so truncated
//! multiplication is exact on it. Coefficients are Taylor coefficients;
//! [`Jet::derivative`] multiplies back the multi-index factorial.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use smallvec::SmallVec;

use crate::field::{is_integer, DomainFault, Field};
use crate::scalar::Scalar;

type Exponent = SmallVec<[u8; 8]>;

#[derive(Debug)]
pub struct JetLayout {
    n_x: usize,
    n_y: usize,
    max_total: usize,
    exponents: Vec<Exponent>,
    lookup: HashMap<Exponent, usize>,
    products: Vec<(u32, u32, u32)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct LayoutKey {
    n_x: usize,
    n_y: usize,
    max_x: usize,
    max_y: usize,
    max_total: usize,
}

fn layout_cache() -> &'static Mutex<HashMap<LayoutKey, Arc<JetLayout>>> {
    static CACHE: OnceLock<Mutex<HashMap<LayoutKey, Arc<JetLayout>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl JetLayout {
    /// Shared layout for `n_x` x-variables and `n_y` y-variables.
    pub fn get(n_x: usize, n_y: usize, max_x: usize, max_y: usize, max_total: usize) -> Arc<Self> {
        let key = LayoutKey {
            n_x,
            n_y,
            max_x: max_x.min(max_total),
            max_y: max_y.min(max_total),
            max_total,
        };
        let mut cache = layout_cache().lock().unwrap_or_else(|e| e.into_inner());
        cache
            .entry(key)
            .or_insert_with(|| Arc::new(Self::build(key)))
            .clone()
    }

    fn build(key: LayoutKey) -> Self {
        let nvars = key.n_x + key.n_y;
        let mut exponents: Vec<Exponent> = Vec::new();
        let mut current: Exponent = SmallVec::from_elem(0, nvars);
        fn recurse(
            var: usize,
            key: &LayoutKey,
            xdeg: usize,
            ydeg: usize,
            cur: &mut Exponent,
            out: &mut Vec<Exponent>,
        ) {
            let nvars = key.n_x + key.n_y;
            if var == nvars {
                out.push(cur.clone());
                return;
            }
            let is_x = var < key.n_x;
            let mut e = 0;
            loop {
                let (nx, ny) = if is_x {
                    (xdeg + e, ydeg)
                } else {
                    (xdeg, ydeg + e)
                };
                if nx > key.max_x || ny > key.max_y || nx + ny > key.max_total {
                    break;
                }
                cur[var] = e as u8;
                recurse(var + 1, key, nx, ny, cur, out);
                e += 1;
            }
            cur[var] = 0;
        }
        recurse(0, &key, 0, 0, &mut current, &mut exponents);
        exponents.sort_by_key(|e| {
            (
                e.iter().map(|&d| d as usize).sum::<usize>(),
                std::cmp::Reverse(e.clone()),
            )
        });

        let lookup: HashMap<Exponent, usize> = exponents
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();

        let mut products = Vec::new();
        for (i, a) in exponents.iter().enumerate() {
            for (j, b) in exponents.iter().enumerate() {
                let sum: Exponent = a.iter().zip(b).map(|(p, q)| p + q).collect();
                if let Some(&k) = lookup.get(&sum) {
                    products.push((i as u32, j as u32, k as u32));
                }
            }
        }

        JetLayout {
            n_x: key.n_x,
            n_y: key.n_y,
            max_total: key.max_total,
            exponents,
            lookup,
            products,
        }
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    fn index_of(&self, exponent: &[u8]) -> Option<usize> {
        self.lookup.get(exponent).copied()
    }
}

#[derive(Debug, Clone)]
pub struct Jet<S: Scalar> {
    layout: Arc<JetLayout>,
    coef: Vec<S>,
}

impl<S: Scalar> Jet<S> {
    pub fn constant(layout: &Arc<JetLayout>, value: S) -> Self {
        let zero = value.lift(0.0);
        let mut coef = vec![zero; layout.len()];
        coef[0] = value;
        Jet {
            layout: layout.clone(),
            coef,
        }
    }

    fn seeded(layout: &Arc<JetLayout>, var: usize, value: S) -> Self {
        let one = value.lift(1.0);
        let mut jet = Self::constant(layout, value);
        let mut e: Exponent = SmallVec::from_elem(0, layout.n_x + layout.n_y);
        e[var] = 1;
        if let Some(k) = layout.index_of(&e) {
            jet.coef[k] = one;
        }
        jet
    }

    /// The x-variable `i` expanded around `value`.
    pub fn x_var(layout: &Arc<JetLayout>, i: usize, value: S) -> Self {
        assert!(i < layout.n_x);
        Self::seeded(layout, i, value)
    }

    /// The y-variable `i` expanded around `value`.
    pub fn y_var(layout: &Arc<JetLayout>, i: usize, value: S) -> Self {
        assert!(i < layout.n_y);
        Self::seeded(layout, layout.n_x + i, value)
    }

    pub fn layout(&self) -> &Arc<JetLayout> {
        &self.layout
    }

    pub fn constant_term(&self) -> &S {
        &self.coef[0]
    }

    /// Partial derivative with the given x- and y-orders, or zero when the
    /// monomial is truncated away.
    pub fn derivative(&self, x_orders: &[u8], y_orders: &[u8]) -> S {
        let mut e: Exponent = SmallVec::with_capacity(self.layout.n_x + self.layout.n_y);
        e.extend_from_slice(x_orders);
        e.extend_from_slice(y_orders);
        debug_assert_eq!(e.len(), self.layout.n_x + self.layout.n_y);
        match self.layout.index_of(&e) {
            Some(k) => {
                let fact: f64 = e.iter().map(|&d| factorial(d as usize)).product();
                self.coef[k].scale(fact)
            }
            None => self.coef[0].lift(0.0),
        }
    }

    fn zero_like(&self) -> Self {
        let zero = self.coef[0].lift(0.0);
        Jet {
            layout: self.layout.clone(),
            coef: vec![zero; self.coef.len()],
        }
    }

    fn is_exact_zero(&self) -> bool {
        self.coef.iter().all(|c| c.is_exact_zero())
    }

    fn nilpotent_part(&self) -> Self {
        let mut h = self.clone();
        h.coef[0] = h.coef[0].lift(0.0);
        h
    }

    /// `f(self)` from the Taylor coefficients `taylor[k] = f^(k)(c0) / k!`.
    fn compose(&self, taylor: &[S]) -> Self {
        let h = self.nilpotent_part();
        let mut acc = Jet::constant(&self.layout, taylor[taylor.len() - 1].clone());
        for c in taylor.iter().rev().skip(1) {
            acc = Field::mul(&acc, &h);
            acc.coef[0] = acc.coef[0].clone() + c.clone();
        }
        acc
    }

    fn order(&self) -> usize {
        self.layout.max_total
    }

    fn check_finite(self) -> Result<Self, DomainFault> {
        if self.coef[0].value().is_finite() {
            Ok(self)
        } else {
            Err(DomainFault::NonFinite)
        }
    }

    fn power_series(&self, r: f64) -> Vec<S> {
        let u0 = &self.coef[0];
        let k_max = self.order();
        let mut out = Vec::with_capacity(k_max + 1);
        let mut binom = 1.0;
        for k in 0..=k_max {
            if k > 0 {
                binom *= (r - (k as f64 - 1.0)) / k as f64;
            }
            let term = if is_integer(r) {
                let e = r as i64 - k as i64;
                if r >= 0.0 && e < 0 {
                    u0.lift(0.0)
                } else {
                    u0.powi(e as i32).scale(binom)
                }
            } else {
                u0.powf(r - k as f64).scale(binom)
            };
            out.push(term);
        }
        out
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

impl<S: Scalar> Field for Jet<S> {
    fn lift(&self, c: f64) -> Self {
        Jet::constant(&self.layout, self.coef[0].lift(c))
    }

    fn value(&self) -> f64 {
        self.coef[0].value()
    }

    fn add(&self, rhs: &Self) -> Self {
        Jet {
            layout: self.layout.clone(),
            coef: self
                .coef
                .iter()
                .zip(&rhs.coef)
                .map(|(a, b)| a.clone() + b.clone())
                .collect(),
        }
    }

    fn sub(&self, rhs: &Self) -> Self {
        Jet {
            layout: self.layout.clone(),
            coef: self
                .coef
                .iter()
                .zip(&rhs.coef)
                .map(|(a, b)| a.clone() - b.clone())
                .collect(),
        }
    }

    fn mul(&self, rhs: &Self) -> Self {
        let mut out = self.zero_like();
        for &(i, j, k) in &self.layout.products {
            let a = &self.coef[i as usize];
            if a.is_exact_zero() {
                continue;
            }
            let b = &rhs.coef[j as usize];
            if b.is_exact_zero() {
                continue;
            }
            let k = k as usize;
            out.coef[k] = out.coef[k].clone() + a.clone() * b.clone();
        }
        out
    }

    fn neg(&self) -> Self {
        Jet {
            layout: self.layout.clone(),
            coef: self.coef.iter().map(|a| -a.clone()).collect(),
        }
    }

    fn div(&self, rhs: &Self) -> Result<Self, DomainFault> {
        let u0 = rhs.coef[0].clone();
        if u0.value() == 0.0 {
            return Err(DomainFault::DivisionByZero);
        }
        let inv0 = u0.recip();
        let mut taylor = Vec::with_capacity(rhs.order() + 1);
        let mut term = inv0.clone();
        for _ in 0..=rhs.order() {
            taylor.push(term.clone());
            term = -(term * inv0.clone());
        }
        Field::mul(self, &rhs.compose(&taylor)).check_finite()
    }

    fn sqrt(&self) -> Result<Self, DomainFault> {
        let v = self.value();
        if v < 0.0 {
            return Err(DomainFault::SqrtNegative);
        }
        if v == 0.0 {
            return if self.is_exact_zero() {
                Ok(self.clone())
            } else {
                Err(DomainFault::SqrtAtZero)
            };
        }
        self.compose(&self.power_series(0.5)).check_finite()
    }

    fn pow(&self, exponent: f64) -> Result<Self, DomainFault> {
        let v = self.value();
        if is_integer(exponent) {
            if exponent < 0.0 && v == 0.0 {
                return Err(DomainFault::DivisionByZero);
            }
            if exponent == 0.0 {
                return Ok(self.lift(1.0));
            }
        } else {
            if v < 0.0 {
                return Err(DomainFault::PowNegativeBase);
            }
            if v == 0.0 {
                return if exponent > 0.0 && self.is_exact_zero() {
                    Ok(self.clone())
                } else if exponent < 0.0 {
                    Err(DomainFault::DivisionByZero)
                } else {
                    Err(DomainFault::PowAtZero)
                };
            }
        }
        self.compose(&self.power_series(exponent)).check_finite()
    }

    fn abs(&self) -> Result<Self, DomainFault> {
        let v = self.value();
        if v > 0.0 {
            Ok(self.clone())
        } else if v < 0.0 {
            Ok(Field::neg(self))
        } else if self.is_exact_zero() {
            Ok(self.clone())
        } else {
            Err(DomainFault::AbsAtZero)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Dual;

    #[test]
    fn layout_counts() {
        // one y-variable, order 3: 1, y, y², y³
        assert_eq!(JetLayout::get(0, 1, 0, 3, 3).len(), 4);
        // two x, two y, x ≤ 1, y ≤ 2, total ≤ 2
        let l = JetLayout::get(2, 2, 1, 2, 2);
        // 1 + 4 linear + 3 yy + 4 xy
        assert_eq!(l.len(), 12);
    }

    #[test]
    fn derivatives_of_polynomial() {
        let l = JetLayout::get(1, 2, 1, 3, 4);
        let x = Jet::x_var(&l, 0, 0.5);
        let y0 = Jet::y_var(&l, 0, 2.0);
        let y1 = Jet::y_var(&l, 1, -1.0);
        // f = x y0² y1
        let f = x.mul(&y0).mul(&y0).mul(&y1);
        assert_eq!(f.value(), 0.5 * 4.0 * -1.0);
        assert_eq!(f.derivative(&[0], &[2, 0]), 2.0 * 0.5 * -1.0);
        assert_eq!(f.derivative(&[1], &[1, 1]), 2.0 * 2.0);
        assert_eq!(f.derivative(&[1], &[2, 1]), 2.0);
        assert_eq!(f.derivative(&[0], &[0, 1]), 0.5 * 4.0);
    }

    #[test]
    fn sqrt_and_division_match_closed_forms() {
        let l = JetLayout::get(0, 1, 0, 3, 3);
        let t = Jet::y_var(&l, 0, 2.0f64);
        let s = t.sqrt().unwrap();
        let v = 2.0f64;
        assert!((s.derivative(&[], &[1]) - 0.5 * v.powf(-0.5)).abs() < 1e-15);
        assert!((s.derivative(&[], &[2]) + 0.25 * v.powf(-1.5)).abs() < 1e-15);
        assert!((s.derivative(&[], &[3]) - 0.375 * v.powf(-2.5)).abs() < 1e-15);
        let q = t.lift(1.0).div(&t).unwrap();
        assert!((q.derivative(&[], &[3]) + 6.0 / v.powi(4)).abs() < 1e-15);
    }

    #[test]
    fn integer_power_of_negative_base() {
        let l = JetLayout::get(0, 1, 0, 3, 3);
        let t = Jet::y_var(&l, 0, -1.5f64);
        let p = t.pow(4.0).unwrap();
        assert!((p.value() - 5.0625).abs() < 1e-14);
        assert!((p.derivative(&[], &[3]) - 24.0 * -1.5).abs() < 1e-13);
        assert_eq!(t.pow(0.5).unwrap_err(), DomainFault::PowNegativeBase);
    }

    #[test]
    fn nested_dual_coefficients_carry_outer_derivative() {
        // f(x, y) = x² y², differentiate twice in y by the jet and once in x by the dual
        let l = JetLayout::get(0, 1, 0, 2, 2);
        let x = Jet::constant(&l, Dual::variable(3.0, 0, 1));
        let y = Jet::y_var(&l, 0, Dual::constant(2.0, 1));
        let f = x.mul(&x).mul(&y).mul(&y);
        let fyy = f.derivative(&[], &[2]);
        assert_eq!(fyy.value, 18.0);
        assert_eq!(fyy.grad[0], 12.0);
    }

    #[test]
    fn abs_at_zero_is_reported() {
        let l = JetLayout::get(0, 1, 0, 2, 2);
        let t = Jet::y_var(&l, 0, 0.0f64);
        assert_eq!(t.abs().unwrap_err(), DomainFault::AbsAtZero);
        assert_eq!(t.sqrt().unwrap_err(), DomainFault::SqrtAtZero);
    }
}
