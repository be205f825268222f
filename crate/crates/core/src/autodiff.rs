//! Reverse-mode automatic differentiation.
//!
//! Every differentiable routine in this crate is written once, generically over
//! the [`Real`] scalar trait. Instantiated with `f64` it is a plain eager
//! evaluation; instantiated with [`Var`] every primitive is recorded on the
//! thread's active [`Tape`] and a reverse sweep yields exact gradients.
//!
//! Arrays are `Vec<T>` / `&[T]` of scalars; the tape records one node per scalar
//! primitive with at most two parents and the local partial derivatives, so
//! gradients always have the shape of the values they belong to.
//!
//! Branches are ordinary Rust control flow on [`Real::value`]: the predicate is
//! never differentiated and only the branch that was taken is on the tape.
//!
//! ```
//! use qgcn_core::autodiff::{Real, Tape};
//!
//! let tape = Tape::new();
//! let x = tape.var(3.0);
//! let y = x * x;
//! let grads = tape.gradient(y);
//! assert_eq!(y.value(), 9.0);
//! assert_eq!(grads.wrt(x), 6.0);
//! ```

use std::cell::RefCell;
use std::fmt;
use std::marker::PhantomData;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("backward pass needs a scalar output, got an array of length {0}")]
    NonScalarOutput(usize),
    #[error("input length {got} does not match expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },
}

/// Scalar type usable by generic differentiable code.
pub trait Real:
    Copy
    + fmt::Debug
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
{
    fn cst(v: f64) -> Self;
    fn value(self) -> f64;

    fn zero() -> Self {
        Self::cst(0.0)
    }

    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sinh(self) -> Self;
    fn cosh(self) -> Self;
    fn tanh(self) -> Self;
    fn asin(self) -> Self;
    fn acos(self) -> Self;
    fn asinh(self) -> Self;
    fn acosh(self) -> Self;
    fn atan2(self, other: Self) -> Self;
    /// Clamp into `[lo, hi]`; the derivative is zero in the saturated region.
    fn clamp(self, lo: f64, hi: f64) -> Self;
    fn softplus(self) -> Self;
    fn relu(self) -> Self;
    fn sigmoid(self) -> Self;
    fn elu(self) -> Self;

    fn square(self) -> Self {
        self * self
    }
}

fn softplus_f64(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid_f64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn sinh(self) -> Self {
        f64::sinh(self)
    }
    fn cosh(self) -> Self {
        f64::cosh(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn asin(self) -> Self {
        f64::asin(self)
    }
    fn acos(self) -> Self {
        f64::acos(self)
    }
    fn asinh(self) -> Self {
        f64::asinh(self)
    }
    fn acosh(self) -> Self {
        f64::acosh(self)
    }
    fn atan2(self, other: Self) -> Self {
        f64::atan2(self, other)
    }
    fn clamp(self, lo: f64, hi: f64) -> Self {
        self.max(lo).min(hi)
    }
    fn softplus(self) -> Self {
        softplus_f64(self)
    }
    fn relu(self) -> Self {
        self.max(0.0)
    }
    fn sigmoid(self) -> Self {
        sigmoid_f64(self)
    }
    fn elu(self) -> Self {
        if self > 0.0 {
            self
        } else {
            self.exp_m1()
        }
    }
}

const CONST: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

#[derive(Default)]
struct TapeData {
    active: bool,
    nodes: Vec<Node>,
}

thread_local! {
    static TAPE: RefCell<TapeData> = RefCell::new(TapeData::default());
}

fn push(parents: [u32; 2], partials: [f64; 2]) -> u32 {
    TAPE.with(|t| {
        let mut t = t.borrow_mut();
        assert!(t.active, "Var arithmetic outside of an active Tape");
        let idx = t.nodes.len();
        assert!(idx < CONST as usize, "tape overflow");
        t.nodes.push(Node { parents, partials });
        idx as u32
    })
}

/// A scalar recorded on the active tape (or a constant that is not recorded).
#[derive(Clone, Copy)]
pub struct Var {
    val: f64,
    idx: u32,
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.idx == CONST {
            write!(f, "Var(const {})", self.val)
        } else {
            write!(f, "Var(#{} = {})", self.idx, self.val)
        }
    }
}

impl Var {
    pub fn is_constant(&self) -> bool {
        self.idx == CONST
    }

    #[inline]
    fn unary(self, val: f64, d: f64) -> Var {
        if self.idx == CONST {
            return Var { val, idx: CONST };
        }
        Var {
            val,
            idx: push([self.idx, CONST], [d, 0.0]),
        }
    }

    #[inline]
    fn binary(self, other: Var, val: f64, da: f64, db: f64) -> Var {
        match (self.idx == CONST, other.idx == CONST) {
            (true, true) => Var { val, idx: CONST },
            (false, true) => Var {
                val,
                idx: push([self.idx, CONST], [da, 0.0]),
            },
            (true, false) => Var {
                val,
                idx: push([other.idx, CONST], [db, 0.0]),
            },
            (false, false) => Var {
                val,
                idx: push([self.idx, other.idx], [da, db]),
            },
        }
    }
}

impl Add for Var {
    type Output = Var;
    #[inline]
    fn add(self, o: Var) -> Var {
        self.binary(o, self.val + o.val, 1.0, 1.0)
    }
}
impl Sub for Var {
    type Output = Var;
    #[inline]
    fn sub(self, o: Var) -> Var {
        self.binary(o, self.val - o.val, 1.0, -1.0)
    }
}
impl Mul for Var {
    type Output = Var;
    #[inline]
    fn mul(self, o: Var) -> Var {
        self.binary(o, self.val * o.val, o.val, self.val)
    }
}
impl Div for Var {
    type Output = Var;
    #[inline]
    fn div(self, o: Var) -> Var {
        let q = self.val / o.val;
        self.binary(o, q, 1.0 / o.val, -q / o.val)
    }
}
impl Neg for Var {
    type Output = Var;
    #[inline]
    fn neg(self) -> Var {
        self.unary(-self.val, -1.0)
    }
}
impl Add<f64> for Var {
    type Output = Var;
    #[inline]
    fn add(self, c: f64) -> Var {
        self.unary(self.val + c, 1.0)
    }
}
impl Sub<f64> for Var {
    type Output = Var;
    #[inline]
    fn sub(self, c: f64) -> Var {
        self.unary(self.val - c, 1.0)
    }
}
impl Mul<f64> for Var {
    type Output = Var;
    #[inline]
    fn mul(self, c: f64) -> Var {
        self.unary(self.val * c, c)
    }
}
impl Div<f64> for Var {
    type Output = Var;
    #[inline]
    fn div(self, c: f64) -> Var {
        self.unary(self.val / c, 1.0 / c)
    }
}
impl AddAssign for Var {
    #[inline]
    fn add_assign(&mut self, o: Var) {
        *self = *self + o;
    }
}

impl Real for Var {
    #[inline]
    fn cst(v: f64) -> Self {
        Var { val: v, idx: CONST }
    }
    #[inline]
    fn value(self) -> f64 {
        self.val
    }
    fn sqrt(self) -> Self {
        let r = self.val.sqrt();
        // zero gradient at the non-differentiable point
        let d = if r > 0.0 { 0.5 / r } else { 0.0 };
        self.unary(r, d)
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
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }
    fn ln(self) -> Self {
        self.unary(self.val.ln(), 1.0 / self.val)
    }
    fn sin(self) -> Self {
        self.unary(self.val.sin(), self.val.cos())
    }
    fn cos(self) -> Self {
        self.unary(self.val.cos(), -self.val.sin())
    }
    fn sinh(self) -> Self {
        self.unary(self.val.sinh(), self.val.cosh())
    }
    fn cosh(self) -> Self {
        self.unary(self.val.cosh(), self.val.sinh())
    }
    fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.unary(t, 1.0 - t * t)
    }
    fn asin(self) -> Self {
        let s = 1.0 - self.val * self.val;
        let d = if s > 0.0 { 1.0 / s.sqrt() } else { 0.0 };
        self.unary(self.val.asin(), d)
    }
    fn acos(self) -> Self {
        let s = 1.0 - self.val * self.val;
        let d = if s > 0.0 { -1.0 / s.sqrt() } else { 0.0 };
        self.unary(self.val.acos(), d)
    }
    fn asinh(self) -> Self {
        self.unary(self.val.asinh(), 1.0 / (self.val * self.val + 1.0).sqrt())
    }
    fn acosh(self) -> Self {
        let s = self.val * self.val - 1.0;
        let d = if s > 0.0 { 1.0 / s.sqrt() } else { 0.0 };
        self.unary(self.val.acosh(), d)
    }
    fn atan2(self, other: Self) -> Self {
        let (y, x) = (self.val, other.val);
        let r2 = x * x + y * y;
        let (dy, dx) = if r2 > 0.0 {
            (x / r2, -y / r2)
        } else {
            (0.0, 0.0)
        };
        self.binary(other, y.atan2(x), dy, dx)
    }
    fn clamp(self, lo: f64, hi: f64) -> Self {
        if self.val < lo {
            self.unary(lo, 0.0)
        } else if self.val > hi {
            self.unary(hi, 0.0)
        } else {
            self
        }
    }
    fn softplus(self) -> Self {
        self.unary(softplus_f64(self.val), sigmoid_f64(self.val))
    }
    fn relu(self) -> Self {
        if self.val > 0.0 {
            self
        } else {
            self.unary(0.0, 0.0)
        }
    }
    fn sigmoid(self) -> Self {
        let s = sigmoid_f64(self.val);
        self.unary(s, s * (1.0 - s))
    }
    fn elu(self) -> Self {
        if self.val > 0.0 {
            self
        } else {
            let e = self.val.exp();
            self.unary(e - 1.0, e)
        }
    }
}

/// Recording session on the current thread.
///
/// Only one tape may be active per thread; independent threads each get their
/// own. Dropping the tape discards every recorded node, so `Var`s created on it
/// must not outlive it.
pub struct Tape {
    _not_send: PhantomData<*const ()>,
}

impl Tape {
    /// # Panics
    /// If another tape is already recording on this thread.
    pub fn new() -> Tape {
        TAPE.with(|t| {
            let mut t = t.borrow_mut();
            assert!(!t.active, "a Tape is already recording on this thread");
            t.active = true;
            t.nodes.clear();
        });
        Tape {
            _not_send: PhantomData,
        }
    }

    /// New differentiable leaf.
    pub fn var(&self, value: f64) -> Var {
        Var {
            val: value,
            idx: push([CONST, CONST], [0.0, 0.0]),
        }
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        TAPE.with(|t| t.borrow().nodes.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Reverse sweep from a scalar output.
    pub fn gradient(&self, output: Var) -> Gradients {
        TAPE.with(|t| {
            let t = t.borrow();
            let mut adj = vec![0.0; t.nodes.len()];
            if output.idx != CONST {
                adj[output.idx as usize] = 1.0;
                for i in (0..=output.idx as usize).rev() {
                    let a = adj[i];
                    if a == 0.0 {
                        continue;
                    }
                    let node = t.nodes[i];
                    for k in 0..2 {
                        let p = node.parents[k];
                        if p != CONST {
                            adj[p as usize] += node.partials[k] * a;
                        }
                    }
                }
            }
            Gradients { adj }
        })
    }

    /// Reverse sweep from an array output, which must hold exactly one element.
    pub fn backward(&self, output: &[Var]) -> Result<Gradients, AutodiffError> {
        match output {
            [single] => Ok(self.gradient(*single)),
            _ => Err(AutodiffError::NonScalarOutput(output.len())),
        }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

impl Drop for Tape {
    fn drop(&mut self) {
        TAPE.with(|t| {
            let mut t = t.borrow_mut();
            t.active = false;
            t.nodes.clear();
        });
    }
}

/// Adjoints produced by [`Tape::gradient`].
pub struct Gradients {
    adj: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> f64 {
        if v.idx == CONST {
            0.0
        } else {
            self.adj.get(v.idx as usize).copied().unwrap_or(0.0)
        }
    }

    pub fn wrt_slice(&self, vs: &[Var]) -> Vec<f64> {
        vs.iter().map(|&v| self.wrt(v)).collect()
    }
}

/// A scalar function of a flat input vector that can be evaluated on any
/// [`Real`]. Implementors are what [`grad_check`] and [`value_and_grad`] consume.
pub trait ScalarFn {
    fn eval<T: Real>(&self, x: &[T]) -> T;
}

/// Value and reverse-mode gradient of `f` at `x`.
pub fn value_and_grad<F: ScalarFn>(f: &F, x: &[f64]) -> (f64, Vec<f64>) {
    let tape = Tape::new();
    let vars = tape.vars(x);
    let out = f.eval(&vars);
    let g = tape.gradient(out);
    (out.value(), g.wrt_slice(&vars))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordCheck {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub coords: Vec<CoordCheck>,
    pub max_rel_err: f64,
    pub passed: bool,
}

/// Absolute difference below which a coordinate passes regardless of `rel_tol`.
pub const GRAD_CHECK_ABS_FLOOR: f64 = 1e-8;

/// Compare a reverse-mode gradient with central finite differences of the
/// plain `f64` evaluation.
pub fn grad_check_with<F: ScalarFn>(
    f: &F,
    x: &[f64],
    analytic: &[f64],
    step: f64,
    rel_tol: f64,
) -> GradCheckReport {
    let mut coords = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = f.eval(&probe);
        probe[i] = x[i] - step;
        let down = f.eval(&probe);
        probe[i] = x[i];
        let numeric = (up - down) / (2.0 * step);
        let a = analytic[i];
        let diff = (a - numeric).abs();
        let scale = a.abs().max(numeric.abs());
        let rel_err = if scale > 0.0 { diff / scale } else { 0.0 };
        let ok = diff.is_finite() && (diff <= GRAD_CHECK_ABS_FLOOR || rel_err <= rel_tol);
        coords.push(CoordCheck {
            index: i,
            analytic: a,
            numeric,
            rel_err,
            ok,
        });
    }
    let max_rel_err = coords
        .iter()
        .filter(|c| (c.analytic - c.numeric).abs() > GRAD_CHECK_ABS_FLOOR)
        .map(|c| c.rel_err)
        .fold(0.0, f64::max);
    let passed = coords.iter().all(|c| c.ok);
    GradCheckReport {
        coords,
        max_rel_err,
        passed,
    }
}

pub fn grad_check<F: ScalarFn>(f: &F, x: &[f64], step: f64, rel_tol: f64) -> GradCheckReport {
    let (_, analytic) = value_and_grad(f, x);
    grad_check_with(f, x, &analytic, step, rel_tol)
}

/// Numerically stable `log(sum(exp(xs)))`. The shift is a constant, so the
/// gradient is the exact softmax.
pub fn logsumexp<T: Real>(xs: &[T]) -> T {
    let m = xs
        .iter()
        .map(|x| x.value())
        .fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return T::cst(m);
    }
    let mut acc = T::zero();
    for &x in xs {
        acc += (x - m).exp();
    }
    acc.ln() + m
}

pub fn sum<T: Real>(xs: &[T]) -> T {
    let mut acc = T::zero();
    for &x in xs {
        acc += x;
    }
    acc
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Row-major `rows x cols` matrix times vector.
pub fn matvec<T: Real>(m: &[T], rows: usize, cols: usize, v: &[T]) -> Vec<T> {
    debug_assert_eq!(m.len(), rows * cols);
    debug_assert_eq!(v.len(), cols);
    (0..rows)
        .map(|r| dot(&m[r * cols..(r + 1) * cols], v))
        .collect()
}

pub fn lift(xs: &[f64]) -> Vec<Var> {
    xs.iter().map(|&x| Var::cst(x)).collect()
}
