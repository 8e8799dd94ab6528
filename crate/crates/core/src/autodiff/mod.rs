//! Reverse-mode automatic differentiation.
//!
//! [`Var`] is a tape-tracked scalar implementing [`Real`]; the solver, viscosity
//! models and network are generic over `Real`, so the same code runs on plain
//! `f64` or records onto a [`Tape`].

mod dd;
mod real;
mod tape;

use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

pub use dd::Dd;
pub use real::Real;
pub(crate) use real::{argmax, argmin};
pub use tape::{BlockOp, Gradients, ParamGrads, ParamId, RegionError, Saved, Tape};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TapeError {
    #[error("output variable is not recorded on this tape")]
    NotOnTape,
    #[error("checkpoint regions cannot be nested")]
    NestedRegion,
    #[error("{op} outside its domain at x = {x}")]
    Domain { op: &'static str, x: f64 },
    #[error("{op} expects {expected} argument(s), got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("checkpointed region failed: {0}")]
    Region(String),
}

const CONST: u32 = u32::MAX;

/// Scalar that records its computational history on a [`Tape`].
///
/// Values built from `Var::constant` (or mixed only with constants) stay off
/// the tape entirely.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    val: f64,
    idx: u32,
    tape: Option<&'t Tape>,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.node() {
            Some(i) => write!(f, "Var({} @{})", self.val, i),
            None => write!(f, "Var({})", self.val),
        }
    }
}

impl<'t> Var<'t> {
    pub fn constant(val: f64) -> Self {
        Self {
            val,
            idx: CONST,
            tape: None,
        }
    }

    pub(crate) fn on_tape(val: f64, idx: u32, tape: &'t Tape) -> Self {
        Self {
            val,
            idx,
            tape: Some(tape),
        }
    }

    pub fn node(&self) -> Option<u32> {
        (self.idx != CONST).then_some(self.idx)
    }

    pub fn is_constant(&self) -> bool {
        self.idx == CONST
    }

    pub(crate) fn tape_ptr(&self) -> Option<&'t Tape> {
        self.tape
    }

    #[inline]
    fn unary(self, val: f64, d: f64) -> Self {
        match self.tape {
            None => Self::constant(val),
            Some(t) => Self::on_tape(val, t.push(val, &[(self.idx, d)]), t),
        }
    }

    #[inline]
    fn binary(a: Self, b: Self, val: f64, da: f64, db: f64) -> Self {
        match (a.tape, b.tape) {
            (None, None) => Self::constant(val),
            (Some(t), None) => Self::on_tape(val, t.push(val, &[(a.idx, da)]), t),
            (None, Some(t)) => Self::on_tape(val, t.push(val, &[(b.idx, db)]), t),
            (Some(t), Some(u)) => {
                debug_assert!(std::ptr::eq(t, u), "mixing variables from two tapes");
                Self::on_tape(val, t.push(val, &[(a.idx, da), (b.idx, db)]), t)
            }
        }
    }

    fn nary(xs: &[Self], val: f64, partials: impl Iterator<Item = f64>) -> Self {
        let tape = xs.iter().find_map(|x| x.tape);
        match tape {
            None => Self::constant(val),
            Some(t) => {
                let edges: Vec<(u32, f64)> = xs
                    .iter()
                    .zip(partials)
                    .filter(|(x, _)| !x.is_constant())
                    .map(|(x, d)| (x.idx, d))
                    .collect();
                Self::on_tape(val, t.push(val, &edges), t)
            }
        }
    }

    /// Pick one of `xs` as-is (subgradient of max/min).
    fn select(xs: &[Self], i: usize) -> Self {
        xs[i]
    }
}

impl<'t> Add for Var<'t> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::binary(self, o, self.val + o.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::binary(self, o, self.val - o.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self::binary(self, o, self.val * o.val, o.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let q = self.val / o.val;
        Self::binary(self, o, q, 1.0 / o.val, -q / o.val)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.unary(-self.val, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Self;
    #[inline]
    fn add(self, c: f64) -> Self {
        self.unary(self.val + c, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Self;
    #[inline]
    fn sub(self, c: f64) -> Self {
        self.unary(self.val - c, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Self;
    #[inline]
    fn mul(self, c: f64) -> Self {
        self.unary(self.val * c, c)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Self;
    #[inline]
    fn div(self, c: f64) -> Self {
        self.unary(self.val / c, 1.0 / c)
    }
}

impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    #[inline]
    fn add(self, v: Var<'t>) -> Var<'t> {
        v + self
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    #[inline]
    fn sub(self, v: Var<'t>) -> Var<'t> {
        v.unary(self - v.val, -1.0)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    #[inline]
    fn mul(self, v: Var<'t>) -> Var<'t> {
        v * self
    }
}

impl<'t> Div<Var<'t>> for f64 {
    type Output = Var<'t>;
    #[inline]
    fn div(self, v: Var<'t>) -> Var<'t> {
        let q = self / v.val;
        v.unary(q, -q / v.val)
    }
}

impl<'t> Real for Var<'t> {
    fn cst(x: f64) -> Self {
        Self::constant(x)
    }
    fn value(&self) -> f64 {
        self.val
    }
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }
    fn ln(self) -> Self {
        self.unary(self.val.ln(), 1.0 / self.val)
    }
    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.unary(s, 0.5 / s)
    }
    fn abs(self) -> Self {
        let d = if self.val > 0.0 {
            1.0
        } else if self.val < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.unary(self.val.abs(), d)
    }
    fn sin(self) -> Self {
        self.unary(self.val.sin(), self.val.cos())
    }
    fn cos(self) -> Self {
        self.unary(self.val.cos(), -self.val.sin())
    }
    fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.unary(t, 1.0 - t * t)
    }
    fn erf(self) -> Self {
        let d = 2.0 / std::f64::consts::PI.sqrt() * (-self.val * self.val).exp();
        self.unary(libm::erf(self.val), d)
    }
    fn powi(self, n: i32) -> Self {
        let d = if n == 0 {
            0.0
        } else {
            n as f64 * self.val.powi(n - 1)
        };
        self.unary(self.val.powi(n), d)
    }
    fn powf(self, p: f64) -> Self {
        let y = self.val.powf(p);
        let d = if p == 0.0 {
            0.0
        } else {
            p * self.val.powf(p - 1.0)
        };
        self.unary(y, d)
    }
    fn max(self, o: Self) -> Self {
        if o.val > self.val {
            o
        } else {
            self
        }
    }
    fn min(self, o: Self) -> Self {
        if o.val < self.val {
            o
        } else {
            self
        }
    }
    fn lincomb(coeffs: &[f64], xs: &[Self]) -> Self {
        debug_assert_eq!(coeffs.len(), xs.len());
        let val = coeffs.iter().zip(xs).map(|(c, x)| c * x.val).sum();
        Self::nary(xs, val, coeffs.iter().copied())
    }
    fn sum(xs: &[Self]) -> Self {
        let val = xs.iter().map(|x| x.val).sum();
        Self::nary(xs, val, std::iter::repeat(1.0))
    }
    fn max_of(xs: &[Self]) -> Self {
        let v: Vec<f64> = xs.iter().map(|x| x.val).collect();
        Self::select(xs, argmax(&v))
    }
    fn min_of(xs: &[Self]) -> Self {
        let v: Vec<f64> = xs.iter().map(|x| x.val).collect();
        Self::select(xs, argmin(&v))
    }
    fn block(inputs: &[Self], op: Arc<dyn BlockOp>) -> Vec<Self> {
        Self::block_with(&Self::constant(0.0), inputs, op)
    }
    fn block_with(anchor: &Self, inputs: &[Self], op: Arc<dyn BlockOp>) -> Vec<Self> {
        match anchor.tape.or_else(|| inputs.iter().find_map(|x| x.tape)) {
            Some(t) => t.push_block(inputs, op),
            None => {
                let v: Vec<f64> = inputs.iter().map(|x| x.val).collect();
                op.forward(&v).0.into_iter().map(Self::constant).collect()
            }
        }
    }
}

/// Primitive operations accepted by [`Tape::record`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Log,
    Sqrt,
    Abs,
    Sin,
    Cos,
    Tanh,
    Erf,
    Max,
    Min,
    Pow(i32),
}

impl Op {
    fn name(self) -> &'static str {
        match self {
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Neg => "neg",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Sqrt => "sqrt",
            Op::Abs => "abs",
            Op::Sin => "sin",
            Op::Cos => "cos",
            Op::Tanh => "tanh",
            Op::Erf => "erf",
            Op::Max => "max",
            Op::Min => "min",
            Op::Pow(_) => "pow",
        }
    }

    fn arity(self) -> usize {
        match self {
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Max | Op::Min => 2,
            _ => 1,
        }
    }
}

impl Tape {
    /// Apply `op` with domain checking.
    ///
    /// `log` needs a positive argument, `sqrt` a non-negative one, `div` a
    /// non-zero divisor and negative integer powers a non-zero base.
    pub fn record<'t>(&'t self, op: Op, args: &[Var<'t>]) -> Result<Var<'t>, TapeError> {
        if args.len() != op.arity() {
            return Err(TapeError::Arity {
                op: op.name(),
                expected: op.arity(),
                got: args.len(),
            });
        }
        let x = args[0];
        let domain = |ok: bool, v: f64| {
            if ok {
                Ok(())
            } else {
                Err(TapeError::Domain { op: op.name(), x: v })
            }
        };
        Ok(match op {
            Op::Add => x + args[1],
            Op::Sub => x - args[1],
            Op::Mul => x * args[1],
            Op::Div => {
                domain(args[1].val != 0.0, args[1].val)?;
                x / args[1]
            }
            Op::Neg => -x,
            Op::Exp => x.exp(),
            Op::Log => {
                domain(x.val > 0.0, x.val)?;
                x.ln()
            }
            Op::Sqrt => {
                domain(x.val >= 0.0, x.val)?;
                x.sqrt()
            }
            Op::Abs => x.abs(),
            Op::Sin => x.sin(),
            Op::Cos => x.cos(),
            Op::Tanh => x.tanh(),
            Op::Erf => x.erf(),
            Op::Max => x.max(args[1]),
            Op::Min => x.min(args[1]),
            Op::Pow(n) => {
                domain(n >= 0 || x.val != 0.0, x.val)?;
                x.powi(n)
            }
        })
    }
}
