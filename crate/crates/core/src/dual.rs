//! Scalars for code that runs both on plain floats and on forward-mode dual
//! numbers. Running a reverse sweep on [`Dual`] inputs seeded with a
//! direction `v` yields an exact Hessian-vector product.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub};

pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + MulAssign
{
    fn cst(v: f64) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    /// Real part.
    fn re(self) -> f64;
    fn scale(self, c: f64) -> Self;
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn re(self) -> f64 {
        self
    }
    fn scale(self, c: f64) -> Self {
        self * c
    }
}

/// `re + eps * d` with `d^2 = 0`.
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
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.re + o.re, self.eps + o.eps)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.re - o.re, self.eps - o.eps)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let q = self.re / o.re;
        Dual::new(q, (self.eps - q * o.eps) / o.re)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.re, -self.eps)
    }
}

impl AddAssign for Dual {
    fn add_assign(&mut self, o: Dual) {
        self.re += o.re;
        self.eps += o.eps;
    }
}

impl MulAssign for Dual {
    fn mul_assign(&mut self, o: Dual) {
        *self = *self * o;
    }
}

impl Scalar for Dual {
    fn cst(v: f64) -> Self {
        Dual::new(v, 0.0)
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        Dual::new(e, e * self.eps)
    }
    fn ln(self) -> Self {
        Dual::new(self.re.ln(), self.eps / self.re)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn scale(self, c: f64) -> Self {
        Dual::new(self.re * c, self.eps * c)
    }
}

/// `re + sum eps[l] d_l` with all products `d_l d_m = 0`: `L` tangent
/// directions carried through one pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualVec<const L: usize> {
    pub re: f64,
    pub eps: [f64; L],
}

impl<const L: usize> DualVec<L> {
    pub fn new(re: f64, eps: [f64; L]) -> Self {
        Self { re, eps }
    }

    fn map(self, re: f64, f: impl Fn(f64) -> f64) -> Self {
        Self::new(re, self.eps.map(f))
    }

    fn zip(self, o: Self, re: f64, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut eps = self.eps;
        for (a, b) in eps.iter_mut().zip(o.eps) {
            *a = f(*a, b);
        }
        Self::new(re, eps)
    }
}

impl<const L: usize> Add for DualVec<L> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        self.zip(o, self.re + o.re, |a, b| a + b)
    }
}

impl<const L: usize> Sub for DualVec<L> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self.zip(o, self.re - o.re, |a, b| a - b)
    }
}

impl<const L: usize> Mul for DualVec<L> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let (x, y) = (self.re, o.re);
        self.zip(o, x * y, |a, b| y * a + x * b)
    }
}

impl<const L: usize> Div for DualVec<L> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.re / o.re;
        let inv = 1.0 / o.re;
        self.zip(o, q, |a, b| (a - q * b) * inv)
    }
}

impl<const L: usize> Neg for DualVec<L> {
    type Output = Self;
    fn neg(self) -> Self {
        self.map(-self.re, |a| -a)
    }
}

impl<const L: usize> AddAssign for DualVec<L> {
    fn add_assign(&mut self, o: Self) {
        self.re += o.re;
        for (a, b) in self.eps.iter_mut().zip(o.eps) {
            *a += b;
        }
    }
}

impl<const L: usize> MulAssign for DualVec<L> {
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<const L: usize> Scalar for DualVec<L> {
    fn cst(v: f64) -> Self {
        Self::new(v, [0.0; L])
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.map(e, |a| e * a)
    }
    fn ln(self) -> Self {
        let inv = 1.0 / self.re;
        self.map(self.re.ln(), |a| a * inv)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn scale(self, c: f64) -> Self {
        self.map(self.re * c, |a| a * c)
    }
}
