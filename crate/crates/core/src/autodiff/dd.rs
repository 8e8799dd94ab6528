//! Double-double scalar (about 32 significant digits).
//!
//! Evaluating the plain solver path with [`Dd`] removes the rounding noise of
//! `f64` from loss values, which is what lets central differences with small
//! steps check taped gradients tightly.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use super::{BlockOp, Real};

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Clone, Copy, Default, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

impl fmt::Debug for Dd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dd({:e} + {:e})", self.hi, self.lo)
    }
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };
    pub const LN2: Dd = Dd {
        hi: 0.6931471805599453,
        lo: 2.3190468138462996e-17,
    };
    pub const PI: Dd = Dd {
        hi: 3.141592653589793,
        lo: 1.2246467991473532e-16,
    };
    pub const FRAC_PI_2: Dd = Dd {
        hi: 1.5707963267948966,
        lo: 6.123233995736766e-17,
    };
    pub const FRAC_2_SQRT_PI: Dd = Dd {
        hi: 1.1283791670955126,
        lo: 1.533545961316588e-17,
    };

    pub const fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    #[inline]
    fn norm(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        Dd { hi, lo }
    }

    /// `self * 2^k`, exact.
    fn ldexp(self, k: i32) -> Self {
        let s = 2f64.powi(k);
        Dd {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    fn is_negative(self) -> bool {
        self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0)
    }

    fn recip(self) -> Self {
        Dd::ONE / self
    }

    /// Taylor series of `sin` and `cos` for `|r| <= pi/4`.
    fn sin_cos_reduced(r: Dd) -> (Dd, Dd) {
        let r2 = r * r;
        let (mut s, mut c) = (r, Dd::ONE);
        let (mut ts, mut tc) = (r, Dd::ONE);
        for n in 1..30 {
            let n = n as f64;
            ts = -(ts * r2) / ((2.0 * n) * (2.0 * n + 1.0));
            tc = -(tc * r2) / ((2.0 * n - 1.0) * (2.0 * n));
            s = s + ts;
            c = c + tc;
            if ts.hi.abs() < 1e-36 && tc.hi.abs() < 1e-36 {
                break;
            }
        }
        (s, c)
    }

    fn sin_cos(self) -> (Dd, Dd) {
        if !self.hi.is_finite() {
            return (Dd::new(f64::NAN), Dd::new(f64::NAN));
        }
        let k = (self.hi / Dd::FRAC_PI_2.hi).round();
        let r = self - Dd::FRAC_PI_2 * k;
        let (s, c) = Dd::sin_cos_reduced(r);
        match (k as i64).rem_euclid(4) {
            0 => (s, c),
            1 => (c, -s),
            2 => (-s, -c),
            _ => (-c, s),
        }
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Dd::new(x)
    }
}

impl PartialOrd for Dd {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&o.hi)? {
            Ordering::Equal => self.lo.partial_cmp(&o.lo),
            ord => Some(ord),
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Dd::norm(s, e + f)
    }
}

impl Sub for Dd {
    type Output = Dd;
    #[inline]
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Neg for Dd {
    type Output = Dd;
    #[inline]
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Mul for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        Dd::norm(p, e + (self.hi * o.lo + self.lo * o.hi))
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        if !q1.is_finite() {
            return Dd::new(q1);
        }
        let r = self - o * q1;
        let q2 = r.hi / o.hi;
        let r = r - o * q2;
        let q3 = r.hi / o.hi;
        Dd::norm(q1, q2) + q3
    }
}

impl Add<f64> for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, b: f64) -> Dd {
        let (s, e) = two_sum(self.hi, b);
        Dd::norm(s, e + self.lo)
    }
}

impl Sub<f64> for Dd {
    type Output = Dd;
    #[inline]
    fn sub(self, b: f64) -> Dd {
        self + (-b)
    }
}

impl Mul<f64> for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, b: f64) -> Dd {
        let (p, e) = two_prod(self.hi, b);
        Dd::norm(p, e + self.lo * b)
    }
}

impl Div<f64> for Dd {
    type Output = Dd;
    #[inline]
    fn div(self, b: f64) -> Dd {
        self / Dd::new(b)
    }
}

impl Real for Dd {
    const EAGER: bool = true;

    fn cst(x: f64) -> Self {
        Dd::new(x)
    }

    fn value(&self) -> f64 {
        self.hi + self.lo
    }

    fn exp(self) -> Self {
        if self.hi > 709.0 {
            return Dd::new(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        if self.hi.is_nan() {
            return self;
        }
        // x = k ln 2 + r, then exp(r) = exp(r / 32)^32
        let k = (self.hi / Dd::LN2.hi).round();
        let r = (self - Dd::LN2 * k).ldexp(-5);
        let mut sum = Dd::ONE;
        let mut term = Dd::ONE;
        for n in 1..30 {
            term = term * r / n as f64;
            sum = sum + term;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        for _ in 0..5 {
            sum = sum * sum;
        }
        sum.ldexp(k as i32)
    }

    fn ln(self) -> Self {
        if self.hi < 0.0 || self.hi.is_nan() {
            return Dd::new(f64::NAN);
        }
        if self.hi == 0.0 {
            return Dd::new(f64::NEG_INFINITY);
        }
        if self.hi.is_infinite() {
            return self;
        }
        // Newton on exp(y) = x
        let mut y = Dd::new(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - 1.0;
        }
        y
    }

    fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return Dd::new(if self.hi == 0.0 { 0.0 } else { f64::NAN });
        }
        let y = self.hi.sqrt();
        let r = self - Dd::new(y) * Dd::new(y);
        Dd::new(y) + r.hi / (2.0 * y)
    }

    fn abs(self) -> Self {
        if self.is_negative() {
            -self
        } else {
            self
        }
    }

    fn sin(self) -> Self {
        self.sin_cos().0
    }

    fn cos(self) -> Self {
        self.sin_cos().1
    }

    fn tanh(self) -> Self {
        if self.hi.abs() > 40.0 {
            return Dd::new(self.hi.signum());
        }
        let e = (self * 2.0).exp();
        (e - 1.0) / (e + 1.0)
    }

    fn erf(self) -> Self {
        let a = self.abs();
        if a.hi > 9.0 {
            return Dd::new(self.hi.signum());
        }
        // erf(a) = 2/sqrt(pi) exp(-a^2) sum_n 2^n a^(2n+1) / (1 3 5 ... (2n+1)), all terms positive
        let a2 = a * a;
        let mut term = a;
        let mut sum = a;
        for n in 1..1000 {
            term = term * a2 * 2.0 / (2 * n + 1) as f64;
            sum = sum + term;
            if term.hi < 1e-34 * sum.hi {
                break;
            }
        }
        let v = Dd::FRAC_2_SQRT_PI * (-a2).exp() * sum;
        if self.is_negative() {
            -v
        } else {
            v
        }
    }

    fn powi(self, n: i32) -> Self {
        let mut base = self;
        let mut e = n.unsigned_abs();
        let mut acc = Dd::ONE;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            e >>= 1;
        }
        if n < 0 {
            acc.recip()
        } else {
            acc
        }
    }

    fn powf(self, p: f64) -> Self {
        if self.hi == 0.0 && self.lo == 0.0 {
            return if p > 0.0 { Dd::ZERO } else { Dd::new(f64::INFINITY) };
        }
        (self.ln() * p).exp()
    }

    fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    fn lincomb(coeffs: &[f64], xs: &[Self]) -> Self {
        coeffs.iter().zip(xs).fold(Dd::ZERO, |acc, (&c, &x)| acc + x * c)
    }

    fn sum(xs: &[Self]) -> Self {
        xs.iter().fold(Dd::ZERO, |acc, &x| acc + x)
    }

    fn max_of(xs: &[Self]) -> Self {
        xs.iter().copied().reduce(|a, b| if b > a { b } else { a }).expect("max_of on empty slice")
    }

    fn min_of(xs: &[Self]) -> Self {
        xs.iter().copied().reduce(|a, b| if b < a { b } else { a }).expect("min_of on empty slice")
    }

    fn block(inputs: &[Self], op: Arc<dyn BlockOp>) -> Vec<Self> {
        op.forward_dd(inputs)
    }

    fn block_with(_: &Self, inputs: &[Self], op: Arc<dyn BlockOp>) -> Vec<Self> {
        op.forward_dd(inputs)
    }
}
