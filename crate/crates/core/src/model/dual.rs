//! Scalars the network code is generic over.
//!
//! Running the reverse-mode gradient on [`Dual`] numbers seeded with a
//! direction `v` yields `∇f(θ)` in the real part and `H v` in the tangent part.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
{
    fn from_f64(x: f64) -> Self;
    fn value(self) -> f64;
    fn scale(self, k: f64) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sigmoid(self) -> Self;
    /// `ln(1 + e^x)`.
    fn softplus(self) -> Self;
}

pub(crate) fn sigmoid_f64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus_f64(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        self * k
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
    fn sigmoid(self) -> Self {
        sigmoid_f64(self)
    }
    #[inline]
    fn softplus(self) -> Self {
        softplus_f64(self)
    }
}

/// First-order dual number `re + eps·ε` with `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual {
    pub re: f64,
    pub eps: f64,
}

impl Dual {
    pub fn new(re: f64, eps: f64) -> Self {
        Self { re, eps }
    }
}

impl Add for Dual {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.eps + o.eps)
    }
}

impl Sub for Dual {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.eps - o.eps)
    }
}

impl Mul for Dual {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}

impl Neg for Dual {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.re, -self.eps)
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.re += o.re;
        self.eps += o.eps;
    }
}

impl Scalar for Dual {
    #[inline]
    fn from_f64(x: f64) -> Self {
        Self::new(x, 0.0)
    }
    #[inline]
    fn value(self) -> f64 {
        self.re
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        Self::new(self.re * k, self.eps * k)
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.re.exp();
        Self::new(e, e * self.eps)
    }
    #[inline]
    fn ln(self) -> Self {
        Self::new(self.re.ln(), self.eps / self.re)
    }
    #[inline]
    fn sigmoid(self) -> Self {
        let s = sigmoid_f64(self.re);
        Self::new(s, s * (1.0 - s) * self.eps)
    }
    #[inline]
    fn softplus(self) -> Self {
        Self::new(softplus_f64(self.re), sigmoid_f64(self.re) * self.eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_branches_agree_and_saturate() {
        for x in [-800.0, -30.0, -1.0, 0.0, 1.0, 30.0, 800.0] {
            let s = sigmoid_f64(x);
            assert!(s.is_finite() && (0.0..=1.0).contains(&s));
            assert!((s - (1.0 - sigmoid_f64(-x))).abs() < 1e-15);
        }
        assert_eq!(softplus_f64(-800.0), 0.0);
        assert_eq!(softplus_f64(800.0), 800.0);
    }

    #[test]
    fn dual_derivatives_match_finite_differences() {
        let h = 1e-6;
        let fns: [(fn(f64) -> f64, fn(Dual) -> Dual); 4] = [
            (f64::exp, Dual::exp),
            (sigmoid_f64, Dual::sigmoid),
            (softplus_f64, Dual::softplus),
            (|x| (x * x + 1.0).ln(), |x| (x * x + Dual::from_f64(1.0)).ln()),
        ];
        for (f, fd) in fns {
            for x in [-2.0, -0.3, 0.7, 1.9] {
                let fdv = (f(x + h) - f(x - h)) / (2.0 * h);
                let d = fd(Dual::new(x, 1.0));
                assert!((d.re - f(x)).abs() < 1e-14);
                assert!((d.eps - fdv).abs() < 1e-8, "{} vs {}", d.eps, fdv);
            }
        }
    }
}
