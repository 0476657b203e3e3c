//! Scalars that every field is generic over.
//!
//! [`Dual`] carries one gradient slot per real coordinate of the chart, so a
//! single evaluation at a seeded point yields the full Jacobian. Duals nest:
//! `Dual<Dual<f64>>` gives Hessians, one more level gives derivatives of
//! quantities that themselves need a Hessian (a flow integrand, say).

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Scalar:
    Copy
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn cst(x: f64) -> Self;
    /// Value with every derivative part dropped.
    fn re(&self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    /// True when the value and every derivative part are exactly zero.
    fn is_exact_zero(&self) -> bool;

    fn recip(self) -> Self {
        Self::cst(1.0) / self
    }

    fn zero() -> Self {
        Self::cst(0.0)
    }

    fn one() -> Self {
        Self::cst(1.0)
    }

    fn powi(self, n: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..n {
            acc *= self;
        }
        acc
    }
}

impl Scalar for f64 {
    #[inline]
    fn cst(x: f64) -> Self {
        x
    }
    #[inline]
    fn re(&self) -> f64 {
        *self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn is_exact_zero(&self) -> bool {
        *self == 0.0
    }
}

/// First-order forward-mode number with a four-slot tangent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: [T; 4],
}

impl<T: Scalar> Dual<T> {
    pub fn constant(re: T) -> Self {
        Dual { re, eps: [T::zero(); 4] }
    }

    /// Coordinate `slot` seeded with unit tangent.
    pub fn variable(re: T, slot: usize) -> Self {
        let mut eps = [T::zero(); 4];
        eps[slot] = T::one();
        Dual { re, eps }
    }

    #[inline]
    fn chain(self, f: T, df: T) -> Self {
        Dual { re: f, eps: self.eps.map(|e| e * df) }
    }
}

/// Seeds a point so that evaluating a field on it produces the Jacobian.
pub fn seed<T: Scalar>(p: &[T; 4]) -> [Dual<T>; 4] {
    std::array::from_fn(|i| Dual::variable(p[i], i))
}

/// Lifts a point into any scalar type as constants.
pub fn lift<S: Scalar>(p: &[f64; 4]) -> [S; 4] {
    p.map(S::cst)
}

impl<T: Scalar> Scalar for Dual<T> {
    #[inline]
    fn cst(x: f64) -> Self {
        Dual::constant(T::cst(x))
    }
    #[inline]
    fn re(&self) -> f64 {
        self.re.re()
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        let r = self.re.recip();
        self.chain(self.re.ln(), r)
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, (s * 2.0).recip())
    }
    fn recip(self) -> Self {
        let r = self.re.recip();
        self.chain(r, -(r * r))
    }
    fn is_exact_zero(&self) -> bool {
        self.re.is_exact_zero() && self.eps.iter().all(|e| e.is_exact_zero())
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Dual { re: self.re + o.re, eps: std::array::from_fn(|i| self.eps[i] + o.eps[i]) }
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Dual { re: self.re - o.re, eps: std::array::from_fn(|i| self.eps[i] - o.eps[i]) }
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Dual {
            re: self.re * o.re,
            eps: std::array::from_fn(|i| self.eps[i] * o.re + self.re * o.eps[i]),
        }
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual { re: -self.re, eps: self.eps.map(|e| -e) }
    }
}

impl<T: Scalar> Add<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: f64) -> Self {
        Dual { re: self.re + o, eps: self.eps }
    }
}

impl<T: Scalar> Sub<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: f64) -> Self {
        Dual { re: self.re - o, eps: self.eps }
    }
}

impl<T: Scalar> Mul<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: f64) -> Self {
        Dual { re: self.re * o, eps: self.eps.map(|e| e * o) }
    }
}

impl<T: Scalar> Div<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: f64) -> Self {
        self * (1.0 / o)
    }
}

impl<T: Scalar> AddAssign for Dual<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Scalar> SubAssign for Dual<T> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Scalar> MulAssign for Dual<T> {
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let x = seed(&[2.0, 3.0, 0.0, 0.0]);
        let f = x[0] * x[1] * x[0];
        assert_eq!(f.re, 12.0);
        assert_eq!(f.eps, [12.0, 4.0, 0.0, 0.0]);
    }

    #[test]
    fn nested_gives_hessian() {
        let p = seed(&[0.5f64, -1.5, 0.0, 0.0]);
        let x = seed(&p);
        // f = exp(x0) * x1^2
        let f = x[0].exp() * x[1] * x[1];
        let e = 0.5f64.exp();
        assert!((f.eps[0].eps[0] - e * 2.25).abs() < 1e-14);
        assert!((f.eps[0].eps[1] - e * 2.0 * -1.5).abs() < 1e-14);
        assert!((f.eps[1].eps[1] - 2.0 * e).abs() < 1e-14);
    }

    #[test]
    fn transcendental_derivatives() {
        let x = Dual::variable(0.7f64, 0);
        assert!((x.ln().eps[0] - 1.0 / 0.7).abs() < 1e-15);
        assert!((x.sqrt().eps[0] - 0.5 / 0.7f64.sqrt()).abs() < 1e-15);
        assert!((x.recip().eps[0] + 1.0 / 0.49).abs() < 1e-13);
        assert_eq!(x.powi(3).re, 0.7f64.powi(3));
    }
}
