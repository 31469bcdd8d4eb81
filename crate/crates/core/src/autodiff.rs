//! Scalar reverse-mode differentiation.
//!
//! Every trainable objective in this crate is written once against the
//! [`Scalar`] trait. Evaluating it with `f64` gives the plain value; evaluating
//! it with [`Var`] records a tape from which [`Tape::gradient`] recovers the
//! exact gradient with respect to the leaf variables.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Numeric type the model code is generic over.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    fn value(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn scale(self, k: f64) -> Self;
    fn shift(self, k: f64) -> Self;
}

impl Scalar for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn scale(self, k: f64) -> Self {
        self * k
    }
    fn shift(self, k: f64) -> Self {
        self + k
    }
}

const NO_PARENT: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    a: u32,
    da: f64,
    b: u32,
    db: f64,
}

/// Append-only record of the operations applied to [`Var`]s.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a new leaf variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let idx = self.push(Node { a: NO_PARENT, da: 0.0, b: NO_PARENT, db: 0.0 });
        Var { tape: Some(self), idx, val: value }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, node: Node) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        (nodes.len() - 1) as u32
    }

    /// Adjoints of `output` with respect to every node; leaf `i` created by
    /// the `i`-th call to [`Tape::var`] is at index `i` when leaves are
    /// registered before any operation.
    pub fn gradient(&self, output: Var<'_>) -> Vec<f64> {
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        if output.tape.is_none() {
            return adj;
        }
        adj[output.idx as usize] = 1.0;
        for i in (0..=output.idx as usize).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            let n = nodes[i];
            if n.a != NO_PARENT {
                adj[n.a as usize] += g * n.da;
            }
            if n.b != NO_PARENT {
                adj[n.b as usize] += g * n.db;
            }
        }
        adj
    }
}

/// A value that is either a tape node or a free constant.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: u32,
    val: f64,
}

impl<'t> Var<'t> {
    fn unary(self, val: f64, d: f64) -> Self {
        match self.tape {
            Some(t) => {
                let idx = t.push(Node { a: self.idx, da: d, b: NO_PARENT, db: 0.0 });
                Var { tape: Some(t), idx, val }
            }
            None => Var { tape: None, idx: NO_PARENT, val },
        }
    }

    fn binary(self, other: Self, val: f64, da: f64, db: f64) -> Self {
        let tape = self.tape.or(other.tape);
        match tape {
            Some(t) => {
                let (a, da) = if self.tape.is_some() { (self.idx, da) } else { (NO_PARENT, 0.0) };
                let (b, db) = if other.tape.is_some() { (other.idx, db) } else { (NO_PARENT, 0.0) };
                let idx = t.push(Node { a, da, b, db });
                Var { tape: Some(t), idx, val }
            }
            None => Var { tape: None, idx: NO_PARENT, val },
        }
    }

    pub fn index(&self) -> Option<usize> {
        self.tape.map(|_| self.idx as usize)
    }
}

impl Add for Var<'_> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        self.binary(o, self.val + o.val, 1.0, 1.0)
    }
}

impl Sub for Var<'_> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self.binary(o, self.val - o.val, 1.0, -1.0)
    }
}

impl Mul for Var<'_> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        self.binary(o, self.val * o.val, o.val, self.val)
    }
}

impl Div for Var<'_> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.val / o.val;
        self.binary(o, q, 1.0 / o.val, -q / o.val)
    }
}

impl Neg for Var<'_> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(-self.val, -1.0)
    }
}

impl Scalar for Var<'_> {
    fn constant(v: f64) -> Self {
        Var { tape: None, idx: NO_PARENT, val: v }
    }
    fn value(self) -> f64 {
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
    fn scale(self, k: f64) -> Self {
        self.unary(self.val * k, k)
    }
    fn shift(self, k: f64) -> Self {
        self.unary(self.val + k, 1.0)
    }
}

pub fn sum<S: Scalar>(xs: &[S]) -> S {
    xs.iter().copied().fold(S::constant(0.0), |acc, x| acc + x)
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(S::constant(0.0), |acc, (&x, &y)| acc + x * y)
}

/// Numerically stable `ln Σ exp(x_i)`; `-inf` for an empty slice.
pub fn logsumexp<S: Scalar>(xs: &[S]) -> S {
    let m = xs.iter().map(|x| x.value()).fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return S::constant(m);
    }
    let total = xs.iter().fold(S::constant(0.0), |acc, &x| acc + x.shift(-m).exp());
    total.ln().shift(m)
}

pub fn log_softmax<S: Scalar>(xs: &[S]) -> Vec<S> {
    let lse = logsumexp(xs);
    xs.iter().map(|&x| x - lse).collect()
}

/// Log-softmax restricted to `mask`; masked-out entries get `-inf`.
pub fn masked_log_softmax<S: Scalar>(xs: &[S], mask: &[bool]) -> Vec<S> {
    let kept: Vec<S> = xs.iter().zip(mask).filter(|(_, &m)| m).map(|(&x, _)| x).collect();
    let lse = logsumexp(&kept);
    xs.iter()
        .zip(mask)
        .map(|(&x, &m)| if m { x - lse } else { S::constant(f64::NEG_INFINITY) })
        .collect()
}
