use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use super::BlockOp;

/// Scalar arithmetic shared by the plain `f64` solver path and the taped path.
///
/// Every solver routine is written once against this trait; instantiating it
/// with [`super::Var`] records the computation for reverse-mode differentiation.
pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// Whether sums can be accumulated term by term at no extra cost. Taped
    /// scalars prefer one [`Real::lincomb`] node over a chain of additions.
    const EAGER: bool = false;

    fn cst(x: f64) -> Self;
    fn value(&self) -> f64;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tanh(self) -> Self;
    fn erf(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn powf(self, p: f64) -> Self;

    /// Larger of the two; ties select `self`.
    fn max(self, other: Self) -> Self;
    /// Smaller of the two; ties select `self`.
    fn min(self, other: Self) -> Self;

    /// `Σ c_i x_i`.
    fn lincomb(coeffs: &[f64], xs: &[Self]) -> Self;
    /// `Σ x_i`.
    fn sum(xs: &[Self]) -> Self;
    /// First maximal element.
    fn max_of(xs: &[Self]) -> Self;
    /// First minimal element.
    fn min_of(xs: &[Self]) -> Self;

    /// Evaluate a vector-valued block operation.
    fn block(inputs: &[Self], op: Arc<dyn BlockOp>) -> Vec<Self>;

    /// Like [`Real::block`], but recorded on the tape of `anchor` even when
    /// every input is a constant (needed for ops that own parameters).
    fn block_with(anchor: &Self, inputs: &[Self], op: Arc<dyn BlockOp>) -> Vec<Self>;

    fn zero() -> Self {
        Self::cst(0.0)
    }

    fn sq(self) -> Self {
        self * self
    }

    fn is_finite(&self) -> bool {
        self.value().is_finite()
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x < xs[best] {
            best = i;
        }
    }
    best
}

impl Real for f64 {
    const EAGER: bool = true;

    #[inline]
    fn cst(x: f64) -> Self {
        x
    }
    #[inline]
    fn value(&self) -> f64 {
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
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn erf(self) -> Self {
        libm::erf(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    #[inline]
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
    #[inline]
    fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
    #[inline]
    fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
    #[inline]
    fn lincomb(coeffs: &[f64], xs: &[Self]) -> Self {
        debug_assert_eq!(coeffs.len(), xs.len());
        coeffs.iter().zip(xs).map(|(c, x)| c * x).sum()
    }
    #[inline]
    fn sum(xs: &[Self]) -> Self {
        xs.iter().sum()
    }
    fn max_of(xs: &[Self]) -> Self {
        xs[argmax(xs)]
    }
    fn min_of(xs: &[Self]) -> Self {
        xs[argmin(xs)]
    }
    fn block(inputs: &[Self], op: Arc<dyn BlockOp>) -> Vec<Self> {
        op.forward(inputs).0
    }
    fn block_with(_: &Self, inputs: &[Self], op: Arc<dyn BlockOp>) -> Vec<Self> {
        op.forward(inputs).0
    }
}
