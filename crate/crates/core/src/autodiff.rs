//! Scalar computation-graph engine.
//!
//! A [`Tape`] records every scalar operation as a node with at most two
//! parents, topologically ordered. Reverse sweeps over the tape give
//! gradients with respect to any recorded leaves; forward-mode [`Dual`]
//! numbers carry directional derivatives with respect to inputs, and their
//! tangent arithmetic is itself recorded on the tape, so a reverse sweep
//! seeded at a tangent yields exact mixed second derivatives
//! (forward-over-reverse).
//!
//! Recording happens once; a frozen [`Recording`] can then be replayed many
//! times against a [`Cursor`] with new leaf values. Replaying with identical
//! leaf values reproduces every node value bit-for-bit.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::Error;
use crate::math;
use crate::Result;

/// Operation kind of a tape node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum OpCode {
    /// Input or constant; value is assigned, never computed.
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Tanh,
    Sin,
    Cos,
    /// Integer power; the exponent is stored in the `rhs` slot.
    PowI,
    Erf,
}

struct TapeBuf {
    code: Vec<OpCode>,
    lhs: Vec<u32>,
    rhs: Vec<u32>,
    val: Vec<f64>,
}

impl TapeBuf {
    fn push(&mut self, code: OpCode, lhs: u32, rhs: u32, val: f64) -> u32 {
        let idx = self.code.len() as u32;
        debug_assert!(code == OpCode::Leaf || lhs < idx);
        debug_assert!(
            code == OpCode::Leaf
                || code == OpCode::PowI
                || matches!(
                    code,
                    OpCode::Neg
                        | OpCode::Exp
                        | OpCode::Tanh
                        | OpCode::Sin
                        | OpCode::Cos
                        | OpCode::Erf
                )
                || rhs < idx
        );
        self.code.push(code);
        self.lhs.push(lhs);
        self.rhs.push(rhs);
        self.val.push(val);
        idx
    }
}

/// Index of the pre-seeded constant 0.0 node on every tape.
const ZERO: u32 = 0;
/// Index of the pre-seeded constant 1.0 node on every tape.
const ONE: u32 = 1;

/// Single-writer recording tape. Independent tapes may live on independent
/// threads; one tape must not be shared across threads while recording.
pub struct Tape {
    buf: RefCell<TapeBuf>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        let tape = Tape {
            buf: RefCell::new(TapeBuf {
                code: Vec::new(),
                lhs: Vec::new(),
                rhs: Vec::new(),
                val: Vec::new(),
            }),
        };
        {
            let mut b = tape.buf.borrow_mut();
            b.push(OpCode::Leaf, 0, 0, 0.0);
            b.push(OpCode::Leaf, 0, 0, 1.0);
        }
        tape
    }

    /// Number of recorded nodes (including the two pre-seeded constants).
    pub fn len(&self) -> usize {
        self.buf.borrow().code.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the two constant nodes are always present
    }

    /// Lift a constant value onto the tape as a leaf node.
    pub fn lift(&self, value: f64) -> Var<'_> {
        if value == 0.0 && value.is_sign_positive() {
            return Var {
                tape: self,
                idx: ZERO,
            };
        }
        if value == 1.0 {
            return Var {
                tape: self,
                idx: ONE,
            };
        }
        let idx = self.buf.borrow_mut().push(OpCode::Leaf, 0, 0, value);
        Var { tape: self, idx }
    }

    /// Create a settable input leaf (used by replayable templates).
    /// Unlike [`Tape::lift`] this always allocates a fresh node, so later
    /// `Cursor::set` calls cannot alias the shared constants.
    pub fn leaf(&self, value: f64) -> Var<'_> {
        let idx = self.buf.borrow_mut().push(OpCode::Leaf, 0, 0, value);
        Var { tape: self, idx }
    }

    /// The shared 0.0 constant.
    pub fn zero(&self) -> Var<'_> {
        Var {
            tape: self,
            idx: ZERO,
        }
    }

    /// The shared 1.0 constant.
    pub fn one(&self) -> Var<'_> {
        Var {
            tape: self,
            idx: ONE,
        }
    }

    fn value_at(&self, idx: u32) -> f64 {
        self.buf.borrow().val[idx as usize]
    }

    fn push(&self, code: OpCode, lhs: u32, rhs: u32, val: f64) -> u32 {
        self.buf.borrow_mut().push(code, lhs, rhs, val)
    }

    /// Reverse-mode gradient of `output` with respect to `leaves`:
    /// one reverse sweep, tape unchanged.
    pub fn gradient(&self, output: Var<'_>, leaves: &[Var<'_>]) -> Result<Vec<f64>> {
        if !std::ptr::eq(output.tape, self) {
            return Err(Error::TapeMismatch);
        }
        for l in leaves {
            if !std::ptr::eq(l.tape, self) {
                return Err(Error::TapeMismatch);
            }
        }
        let buf = self.buf.borrow();
        let out = output.idx as usize;
        let mut adj = vec![0.0; out + 1];
        reverse_sweep(&buf.code, &buf.lhs, &buf.rhs, &buf.val, &mut adj, out, 1.0);
        Ok(leaves
            .iter()
            .map(|l| adj.get(l.idx as usize).copied().unwrap_or(0.0))
            .collect())
    }

    /// Freeze the current contents into an immutable, replayable recording.
    pub fn freeze(&self) -> Recording {
        let buf = self.buf.borrow();
        Recording {
            code: buf.code.clone(),
            lhs: buf.lhs.clone(),
            rhs: buf.rhs.clone(),
            init_val: buf.val.clone(),
        }
    }
}

/// Shared forward evaluation so record-time values and replayed values are
/// computed by the exact same expressions.
#[inline(always)]
fn eval_op(code: OpCode, vl: f64, vr: f64, rhs_raw: u32) -> f64 {
    match code {
        OpCode::Leaf => unreachable!("leaves are never re-evaluated"),
        OpCode::Add => vl + vr,
        OpCode::Sub => vl - vr,
        OpCode::Mul => vl * vr,
        OpCode::Div => vl / vr,
        OpCode::Neg => -vl,
        OpCode::Exp => vl.exp(),
        OpCode::Tanh => vl.tanh(),
        OpCode::Sin => vl.sin(),
        OpCode::Cos => vl.cos(),
        OpCode::PowI => vl.powi(rhs_raw as i32),
        OpCode::Erf => math::erf(vl),
    }
}

fn forward_sweep(code: &[OpCode], lhs: &[u32], rhs: &[u32], val: &mut [f64]) {
    // Invariant established at record time: parents precede children, so all
    // unchecked reads below index i are already computed.
    for i in 0..code.len() {
        unsafe {
            let c = *code.get_unchecked(i);
            if c == OpCode::Leaf {
                continue;
            }
            let l = *lhs.get_unchecked(i) as usize;
            let r_raw = *rhs.get_unchecked(i);
            let vl = *val.get_unchecked(l);
            let vr = match c {
                OpCode::Add | OpCode::Sub | OpCode::Mul | OpCode::Div => {
                    *val.get_unchecked(r_raw as usize)
                }
                _ => 0.0,
            };
            *val.get_unchecked_mut(i) = eval_op(c, vl, vr, r_raw);
        }
    }
}

fn reverse_sweep(
    code: &[OpCode],
    lhs: &[u32],
    rhs: &[u32],
    val: &[f64],
    adj: &mut [f64],
    out: usize,
    seed: f64,
) {
    adj[..=out].fill(0.0);
    adj[out] = seed;
    for i in (0..=out).rev() {
        unsafe {
            let a = *adj.get_unchecked(i);
            if a == 0.0 {
                continue;
            }
            let c = *code.get_unchecked(i);
            let l = *lhs.get_unchecked(i) as usize;
            match c {
                OpCode::Leaf => {}
                OpCode::Add => {
                    let r = *rhs.get_unchecked(i) as usize;
                    *adj.get_unchecked_mut(l) += a;
                    *adj.get_unchecked_mut(r) += a;
                }
                OpCode::Sub => {
                    let r = *rhs.get_unchecked(i) as usize;
                    *adj.get_unchecked_mut(l) += a;
                    *adj.get_unchecked_mut(r) -= a;
                }
                OpCode::Mul => {
                    let r = *rhs.get_unchecked(i) as usize;
                    *adj.get_unchecked_mut(l) += a * *val.get_unchecked(r);
                    *adj.get_unchecked_mut(r) += a * *val.get_unchecked(l);
                }
                OpCode::Div => {
                    let r = *rhs.get_unchecked(i) as usize;
                    let vr = *val.get_unchecked(r);
                    *adj.get_unchecked_mut(l) += a / vr;
                    *adj.get_unchecked_mut(r) -= a * *val.get_unchecked(i) / vr;
                }
                OpCode::Neg => *adj.get_unchecked_mut(l) -= a,
                OpCode::Exp => *adj.get_unchecked_mut(l) += a * *val.get_unchecked(i),
                OpCode::Tanh => {
                    let y = *val.get_unchecked(i);
                    *adj.get_unchecked_mut(l) += a * (1.0 - y * y);
                }
                OpCode::Sin => *adj.get_unchecked_mut(l) += a * val.get_unchecked(l).cos(),
                OpCode::Cos => *adj.get_unchecked_mut(l) -= a * val.get_unchecked(l).sin(),
                OpCode::PowI => {
                    let k = *rhs.get_unchecked(i) as i32;
                    let x = *val.get_unchecked(l);
                    *adj.get_unchecked_mut(l) += a * k as f64 * x.powi(k - 1);
                }
                OpCode::Erf => {
                    *adj.get_unchecked_mut(l) += a * math::erf_derivative(*val.get_unchecked(l));
                }
            }
        }
    }
}

/// Immutable snapshot of a recorded tape, safe to share across threads.
#[derive(Clone)]
pub struct Recording {
    code: Vec<OpCode>,
    lhs: Vec<u32>,
    rhs: Vec<u32>,
    init_val: Vec<f64>,
}

impl Recording {
    pub fn len(&self) -> usize {
        self.code.len()
    }

    pub fn is_empty(&self) -> bool {
        self.code.is_empty()
    }

    /// Fresh mutable replay state initialized with the recorded values.
    pub fn cursor(&self) -> Cursor {
        Cursor {
            val: self.init_val.clone(),
            adj: vec![0.0; self.init_val.len()],
        }
    }

    /// Recompute every non-leaf node value from the current leaf values.
    pub fn forward(&self, cur: &mut Cursor) {
        forward_sweep(&self.code, &self.lhs, &self.rhs, &mut cur.val);
    }

    /// Reverse sweep from `out` with the given seed adjoint. Adjoints of all
    /// nodes up to `out` are reset first.
    pub fn reverse(&self, cur: &mut Cursor, out: u32, seed: f64) {
        reverse_sweep(
            &self.code,
            &self.lhs,
            &self.rhs,
            &cur.val,
            &mut cur.adj,
            out as usize,
            seed,
        );
    }
}

/// Mutable per-replay state: node values and adjoints.
pub struct Cursor {
    val: Vec<f64>,
    adj: Vec<f64>,
}

impl Cursor {
    /// Assign a leaf value before the next forward sweep.
    #[inline]
    pub fn set(&mut self, idx: u32, value: f64) {
        self.val[idx as usize] = value;
    }

    #[inline]
    pub fn value(&self, idx: u32) -> f64 {
        self.val[idx as usize]
    }

    #[inline]
    pub fn adjoint(&self, idx: u32) -> f64 {
        self.adj[idx as usize]
    }
}

/// Handle to one scalar node on a tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}={}", self.idx, self.value())
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> f64 {
        self.tape.value_at(self.idx)
    }

    pub fn index(&self) -> u32 {
        self.idx
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn is_zero_node(&self) -> bool {
        self.idx == ZERO
    }

    fn bin(self, code: OpCode, o: Var<'t>) -> Var<'t> {
        assert!(
            std::ptr::eq(self.tape, o.tape),
            "operands belong to different tapes"
        );
        let v = eval_op(code, self.value(), o.value(), o.idx);
        let idx = self.tape.push(code, self.idx, o.idx, v);
        Var {
            tape: self.tape,
            idx,
        }
    }

    fn unary(self, code: OpCode) -> Var<'t> {
        let v = eval_op(code, self.value(), 0.0, 0);
        let idx = self.tape.push(code, self.idx, 0, v);
        Var {
            tape: self.tape,
            idx,
        }
    }

    /// Division that reports a zero denominator instead of recording one.
    pub fn try_div(self, o: Var<'t>) -> Result<Var<'t>> {
        if !std::ptr::eq(self.tape, o.tape) {
            return Err(Error::TapeMismatch);
        }
        if o.value() == 0.0 {
            return Err(Error::DivisionByZero);
        }
        Ok(self.bin(OpCode::Div, o))
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(OpCode::Exp)
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(OpCode::Tanh)
    }

    pub fn sin(self) -> Var<'t> {
        self.unary(OpCode::Sin)
    }

    pub fn cos(self) -> Var<'t> {
        self.unary(OpCode::Cos)
    }

    pub fn erf(self) -> Var<'t> {
        self.unary(OpCode::Erf)
    }

    pub fn powi(self, k: i32) -> Var<'t> {
        let v = self.value().powi(k);
        let idx = self.tape.push(OpCode::PowI, self.idx, k as u32, v);
        Var {
            tape: self.tape,
            idx,
        }
    }

    pub fn square(self) -> Var<'t> {
        self * self
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, o: Var<'t>) -> Var<'t> {
        self.bin(OpCode::Add, o)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, o: Var<'t>) -> Var<'t> {
        self.bin(OpCode::Sub, o)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, o: Var<'t>) -> Var<'t> {
        self.bin(OpCode::Mul, o)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, o: Var<'t>) -> Var<'t> {
        self.try_div(o).expect("division by zero on tape")
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(OpCode::Neg)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, c: f64) -> Var<'t> {
        self + self.tape.lift(c)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, c: f64) -> Var<'t> {
        self - self.tape.lift(c)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Var<'t> {
        self * self.tape.lift(c)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, v: Var<'t>) -> Var<'t> {
        v * self
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, c: f64) -> Var<'t> {
        self / self.tape.lift(c)
    }
}

/// Forward-mode pair: a primal and its directional derivative, both living
/// on the same tape so the tangent remains differentiable.
#[derive(Clone, Copy, Debug)]
pub struct Dual<'t> {
    pub primal: Var<'t>,
    pub tangent: Var<'t>,
}

impl<'t> Dual<'t> {
    pub fn new(primal: Var<'t>, tangent: Var<'t>) -> Self {
        Dual { primal, tangent }
    }

    /// Constant: tangent pinned to the shared zero node.
    pub fn constant(tape: &'t Tape, v: f64) -> Self {
        Dual {
            primal: tape.lift(v),
            tangent: tape.zero(),
        }
    }

    /// Promote a plain variable (zero tangent).
    pub fn from_var(v: Var<'t>) -> Self {
        Dual {
            primal: v,
            tangent: v.tape.zero(),
        }
    }

    pub fn value(&self) -> f64 {
        self.primal.value()
    }

    pub fn tangent_value(&self) -> f64 {
        self.tangent.value()
    }

    fn tape(&self) -> &'t Tape {
        self.primal.tape
    }

    pub fn exp(self) -> Self {
        let y = self.primal.exp();
        let t = if self.tangent.is_zero_node() {
            self.tape().zero()
        } else {
            self.tangent * y
        };
        Dual {
            primal: y,
            tangent: t,
        }
    }

    pub fn tanh(self) -> Self {
        let y = self.primal.tanh();
        let t = if self.tangent.is_zero_node() {
            self.tape().zero()
        } else {
            let sech2 = self.tape().one() - y * y;
            self.tangent * sech2
        };
        Dual {
            primal: y,
            tangent: t,
        }
    }

    pub fn sin(self) -> Self {
        let y = self.primal.sin();
        let t = if self.tangent.is_zero_node() {
            self.tape().zero()
        } else {
            self.tangent * self.primal.cos()
        };
        Dual {
            primal: y,
            tangent: t,
        }
    }

    pub fn cos(self) -> Self {
        let y = self.primal.cos();
        let t = if self.tangent.is_zero_node() {
            self.tape().zero()
        } else {
            -(self.tangent * self.primal.sin())
        };
        Dual {
            primal: y,
            tangent: t,
        }
    }

    pub fn erf(self) -> Self {
        let y = self.primal.erf();
        let t = if self.tangent.is_zero_node() {
            self.tape().zero()
        } else {
            let d = (-(self.primal * self.primal)).exp() * std::f64::consts::FRAC_2_SQRT_PI;
            self.tangent * d
        };
        Dual {
            primal: y,
            tangent: t,
        }
    }

    pub fn powi(self, k: i32) -> Self {
        let y = self.primal.powi(k);
        let t = if self.tangent.is_zero_node() || k == 0 {
            self.tape().zero()
        } else {
            self.tangent * (self.primal.powi(k - 1) * k as f64)
        };
        Dual {
            primal: y,
            tangent: t,
        }
    }

    pub fn square(self) -> Self {
        self * self
    }

    pub fn try_div(self, o: Dual<'t>) -> Result<Dual<'t>> {
        let q = self.primal.try_div(o.primal)?;
        let t = match (self.tangent.is_zero_node(), o.tangent.is_zero_node()) {
            (true, true) => self.tape().zero(),
            (false, true) => self.tangent / o.primal,
            (true, false) => -(q * o.tangent) / o.primal,
            (false, false) => (self.tangent - q * o.tangent) / o.primal,
        };
        Ok(Dual {
            primal: q,
            tangent: t,
        })
    }
}

impl<'t> Add for Dual<'t> {
    type Output = Dual<'t>;
    fn add(self, o: Dual<'t>) -> Dual<'t> {
        let t = match (self.tangent.is_zero_node(), o.tangent.is_zero_node()) {
            (true, true) => self.tape().zero(),
            (false, true) => self.tangent,
            (true, false) => o.tangent,
            (false, false) => self.tangent + o.tangent,
        };
        Dual {
            primal: self.primal + o.primal,
            tangent: t,
        }
    }
}

impl<'t> Sub for Dual<'t> {
    type Output = Dual<'t>;
    fn sub(self, o: Dual<'t>) -> Dual<'t> {
        let t = match (self.tangent.is_zero_node(), o.tangent.is_zero_node()) {
            (true, true) => self.tape().zero(),
            (false, true) => self.tangent,
            (true, false) => -o.tangent,
            (false, false) => self.tangent - o.tangent,
        };
        Dual {
            primal: self.primal - o.primal,
            tangent: t,
        }
    }
}

impl<'t> Mul for Dual<'t> {
    type Output = Dual<'t>;
    fn mul(self, o: Dual<'t>) -> Dual<'t> {
        let t = match (self.tangent.is_zero_node(), o.tangent.is_zero_node()) {
            (true, true) => self.tape().zero(),
            (false, true) => self.tangent * o.primal,
            (true, false) => self.primal * o.tangent,
            (false, false) => self.tangent * o.primal + self.primal * o.tangent,
        };
        Dual {
            primal: self.primal * o.primal,
            tangent: t,
        }
    }
}

impl<'t> Div for Dual<'t> {
    type Output = Dual<'t>;
    fn div(self, o: Dual<'t>) -> Dual<'t> {
        self.try_div(o).expect("division by zero on tape")
    }
}

impl<'t> Neg for Dual<'t> {
    type Output = Dual<'t>;
    fn neg(self) -> Dual<'t> {
        let t = if self.tangent.is_zero_node() {
            self.tape().zero()
        } else {
            -self.tangent
        };
        Dual {
            primal: -self.primal,
            tangent: t,
        }
    }
}

impl<'t> Add<f64> for Dual<'t> {
    type Output = Dual<'t>;
    fn add(self, c: f64) -> Dual<'t> {
        Dual {
            primal: self.primal + c,
            tangent: self.tangent,
        }
    }
}

impl<'t> Sub<f64> for Dual<'t> {
    type Output = Dual<'t>;
    fn sub(self, c: f64) -> Dual<'t> {
        Dual {
            primal: self.primal - c,
            tangent: self.tangent,
        }
    }
}

impl<'t> Mul<f64> for Dual<'t> {
    type Output = Dual<'t>;
    fn mul(self, c: f64) -> Dual<'t> {
        let t = if self.tangent.is_zero_node() {
            self.tape().zero()
        } else {
            self.tangent * c
        };
        Dual {
            primal: self.primal * c,
            tangent: t,
        }
    }
}

impl<'t> Mul<Dual<'t>> for f64 {
    type Output = Dual<'t>;
    fn mul(self, d: Dual<'t>) -> Dual<'t> {
        d * self
    }
}

impl<'t> Mul<Var<'t>> for Dual<'t> {
    type Output = Dual<'t>;
    fn mul(self, v: Var<'t>) -> Dual<'t> {
        self * Dual::from_var(v)
    }
}

impl<'t> Mul<Dual<'t>> for Var<'t> {
    type Output = Dual<'t>;
    fn mul(self, d: Dual<'t>) -> Dual<'t> {
        Dual::from_var(self) * d
    }
}

impl<'t> Add<Dual<'t>> for Var<'t> {
    type Output = Dual<'t>;
    fn add(self, d: Dual<'t>) -> Dual<'t> {
        Dual::from_var(self) + d
    }
}

impl<'t> Add<Var<'t>> for Dual<'t> {
    type Output = Dual<'t>;
    fn add(self, v: Var<'t>) -> Dual<'t> {
        self + Dual::from_var(v)
    }
}

/// Unified scalar interface so network and residual code can run on plain
/// variables or on duals carrying a directional derivative.
pub trait TapeNum<'t>:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
    + Add<f64, Output = Self>
{
    fn from_var(v: Var<'t>) -> Self;
    fn constant(tape: &'t Tape, v: f64) -> Self;
    fn tanh(self) -> Self;
    fn exp(self) -> Self;
    fn value(&self) -> f64;
}

impl<'t> TapeNum<'t> for Var<'t> {
    fn from_var(v: Var<'t>) -> Self {
        v
    }
    fn constant(tape: &'t Tape, v: f64) -> Self {
        tape.lift(v)
    }
    fn tanh(self) -> Self {
        Var::tanh(self)
    }
    fn exp(self) -> Self {
        Var::exp(self)
    }
    fn value(&self) -> f64 {
        Var::value(self)
    }
}

impl<'t> TapeNum<'t> for Dual<'t> {
    fn from_var(v: Var<'t>) -> Self {
        Dual::from_var(v)
    }
    fn constant(tape: &'t Tape, v: f64) -> Self {
        Dual::constant(tape, v)
    }
    fn tanh(self) -> Self {
        Dual::tanh(self)
    }
    fn exp(self) -> Self {
        Dual::exp(self)
    }
    fn value(&self) -> f64 {
        self.primal.value()
    }
}

/// Directional derivative of `f` at `point` along `direction`. The returned
/// dual's tangent is itself a tape variable, so a reverse sweep over it
/// yields mixed derivatives with respect to any other leaves of `f`.
pub fn input_derivative<'t, F>(
    tape: &'t Tape,
    point: &[f64],
    direction: &[f64],
    f: F,
) -> Result<Dual<'t>>
where
    F: FnOnce(&[Dual<'t>]) -> Result<Dual<'t>>,
{
    if point.len() != direction.len() {
        return Err(Error::DimensionMismatch {
            expected: point.len(),
            got: direction.len(),
        });
    }
    let inputs: Vec<Dual<'t>> = point
        .iter()
        .zip(direction)
        .map(|(&p, &d)| Dual::new(tape.lift(p), tape.lift(d)))
        .collect();
    f(&inputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn lift_identity() {
        let tape = Tape::new();
        assert_eq!(tape.lift(0.0).value(), 0.0);
        assert_eq!(tape.lift(2.5).value(), 2.5);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(3.0);
        let c = tape.lift(7.0);
        let _ = x * x; // unrelated activity on the tape
        let g = tape.gradient(c, &[x]).unwrap();
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn tanh_tangent_at_zero() {
        let tape = Tape::new();
        let x = Dual::new(tape.lift(0.0), tape.lift(1.0));
        let y = x.tanh();
        assert_eq!(y.value(), 0.0);
        assert_eq!(y.tangent_value(), 1.0);
    }

    #[test]
    fn mul_reverse_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(2.0);
        let y = tape.leaf(3.0);
        let z = x * y;
        let g = tape.gradient(z, &[x, y]).unwrap();
        assert_eq!(g, vec![3.0, 2.0]);
    }

    #[test]
    fn erf_tangent_at_zero() {
        let tape = Tape::new();
        let x = Dual::new(tape.lift(0.0), tape.lift(1.0));
        let y = x.erf();
        let expect = 2.0 / std::f64::consts::PI.sqrt();
        assert!((y.tangent_value() - 1.128_379_167_1).abs() < 1e-9);
        assert!((y.tangent_value() - expect).abs() < 1e-12);
        // finite-difference cross-check away from the odd-symmetry fold of
        // the rational approximation; tolerance covers the derivative of the
        // approximation's error term
        let x0 = 0.4;
        let h = 1e-6;
        let tape2 = Tape::new();
        let d = Dual::new(tape2.lift(x0), tape2.lift(1.0)).erf();
        let fd = (crate::math::erf(x0 + h) - crate::math::erf(x0 - h)) / (2.0 * h);
        assert!((d.tangent_value() - fd).abs() / fd.abs() < 1e-4);
    }

    #[test]
    fn reverse_gradient_identity_and_square() {
        let tape = Tape::new();
        let x = tape.leaf(3.0);
        assert_eq!(tape.gradient(x, &[x]).unwrap(), vec![1.0]);
        let y = (x - 1.0).square();
        assert_eq!(tape.gradient(y, &[x]).unwrap(), vec![4.0]);
    }

    #[test]
    fn reverse_gradient_x_tanh_y() {
        let tape = Tape::new();
        let x = tape.leaf(2.0);
        let y = tape.leaf(0.0);
        let z = x * y.tanh();
        let g = tape.gradient(z, &[x, y]).unwrap();
        assert!((g[0] - 0.0).abs() < 1e-15); // tanh(0)
        assert!((g[1] - 2.0).abs() < 1e-15); // x * sech^2(0)
    }

    #[test]
    fn gradient_rejects_foreign_leaf() {
        let t1 = Tape::new();
        let t2 = Tape::new();
        let x = t1.leaf(1.0);
        let y = t2.leaf(1.0);
        let z = x * x;
        assert_eq!(t1.gradient(z, &[y]).unwrap_err(), Error::TapeMismatch);
    }

    #[test]
    fn try_div_by_zero() {
        let tape = Tape::new();
        let x = tape.leaf(1.0);
        let z = tape.lift(0.0);
        assert_eq!(x.try_div(z).unwrap_err(), Error::DivisionByZero);
    }

    #[test]
    fn input_derivative_square() {
        let tape = Tape::new();
        let d = input_derivative(&tape, &[3.0], &[1.0], |xs| Ok(xs[0] * xs[0])).unwrap();
        assert_eq!(d.tangent_value(), 6.0);
    }

    #[test]
    fn input_derivative_sin_cos() {
        let tape = Tape::new();
        let d = input_derivative(&tape, &[0.0, 0.0], &[1.0, 0.0], |xs| {
            Ok(xs[0].sin() * xs[1].cos())
        })
        .unwrap();
        assert!((d.tangent_value() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn input_derivative_dimension_mismatch() {
        let tape = Tape::new();
        let e = input_derivative(&tape, &[1.0, 2.0], &[1.0], |xs| Ok(xs[0])).unwrap_err();
        assert!(matches!(e, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn mixed_forward_over_reverse() {
        // f(theta, x) = theta * tanh(x); d/dtheta [d f/dx] = 1 - tanh(x)^2
        let tape = Tape::new();
        let theta = tape.leaf(5.0);
        let x = Dual::new(tape.lift(0.0), tape.lift(1.0));
        let f = theta * x.tanh();
        let g = tape.gradient(f.tangent, &[theta]).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dual_quotient_rule() {
        // d/dx [x / (1 + x)] = 1/(1+x)^2 at x = 2 -> 1/9
        let tape = Tape::new();
        let x = Dual::new(tape.lift(2.0), tape.lift(1.0));
        let y = x.try_div(x + 1.0).unwrap();
        assert!((y.tangent_value() - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn replay_reproduces_values_bitwise() {
        let tape = Tape::new();
        let x = tape.leaf(0.7);
        let y = tape.leaf(-1.3);
        let z = (x.tanh() * y.exp() + x.sin() * y.cos() - x.powi(3)).erf();
        let rec = tape.freeze();
        let mut c1 = rec.cursor();
        rec.forward(&mut c1);
        assert_eq!(c1.value(z.index()).to_bits(), z.value().to_bits());
        // new leaf values, then restore -> bitwise identical again
        let mut c2 = rec.cursor();
        c2.set(x.index(), 2.0);
        c2.set(y.index(), 0.25);
        rec.forward(&mut c2);
        c2.set(x.index(), 0.7);
        c2.set(y.index(), -1.3);
        rec.forward(&mut c2);
        assert_eq!(c2.value(z.index()).to_bits(), z.value().to_bits());
    }

    #[test]
    fn replayed_reverse_matches_one_shot_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(0.3);
        let y = tape.leaf(0.9);
        let out = (x * y).tanh() + x.exp() * y;
        let g = tape.gradient(out, &[x, y]).unwrap();
        let rec = tape.freeze();
        let mut cur = rec.cursor();
        rec.forward(&mut cur);
        rec.reverse(&mut cur, out.index(), 1.0);
        assert_eq!(cur.adjoint(x.index()).to_bits(), g[0].to_bits());
        assert_eq!(cur.adjoint(y.index()).to_bits(), g[1].to_bits());
    }

    #[test]
    fn gradient_linearity() {
        // grad(a*f + b*g) == a*grad(f) + b*grad(g) to machine precision
        let tape = Tape::new();
        let x = tape.leaf(0.4);
        let y = tape.leaf(1.7);
        let f = x.tanh() * y;
        let g = x * x + y.sin();
        let (a, b) = (2.5, -1.25);
        let combo = f * a + g * b;
        let gf = tape.gradient(f, &[x, y]).unwrap();
        let gg = tape.gradient(g, &[x, y]).unwrap();
        let gc = tape.gradient(combo, &[x, y]).unwrap();
        for i in 0..2 {
            let expect = a * gf[i] + b * gg[i];
            assert!((gc[i] - expect).abs() <= 1e-14 * expect.abs().max(1.0));
        }
    }

    /// Central finite difference of a scalar closure.
    fn fd<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], i: usize, h: f64) -> f64 {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        (f(&xp) - f(&xm)) / (2.0 * h)
    }

    #[test]
    fn gradient_matches_finite_differences_on_random_networks() {
        // random 2-layer tanh networks (widths <= 8), 100 random points
        let mut rng = SplitMix64::new(2024);
        for trial in 0..10 {
            let w1: Vec<f64> = (0..8).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let b1: Vec<f64> = (0..8).map(|_| rng.uniform(-0.5, 0.5)).collect();
            let w2: Vec<f64> = (0..8).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let eval = |p: &[f64]| -> f64 {
                // p = [x, w1.., b1.., w2..]
                let x = p[0];
                let mut out = 0.0;
                for j in 0..8 {
                    out += p[1 + 16 + j] * (p[1 + j] * x + p[1 + 8 + j]).tanh();
                }
                out
            };
            for _ in 0..10 {
                let x0 = rng.uniform(-2.0, 2.0);
                let mut flat = vec![x0];
                flat.extend_from_slice(&w1);
                flat.extend_from_slice(&b1);
                flat.extend_from_slice(&w2);

                let tape = Tape::new();
                let leaves: Vec<Var> = flat.iter().map(|&v| tape.leaf(v)).collect();
                let mut out = tape.lift(0.0);
                for j in 0..8 {
                    out = out
                        + leaves[1 + 16 + j]
                            * (leaves[1 + j] * leaves[0] + leaves[1 + 8 + j]).tanh();
                }
                let grad = tape.gradient(out, &leaves).unwrap();
                for i in 0..flat.len() {
                    let numeric = fd(&eval, &flat, i, 1e-5);
                    let denom = numeric.abs().max(1e-3);
                    assert!(
                        (grad[i] - numeric).abs() / denom < 1e-6,
                        "trial {trial} component {i}: ad={} fd={}",
                        grad[i],
                        numeric
                    );
                }
            }
        }
    }

    #[test]
    fn deterministic_gradients_across_runs() {
        let run = || -> Vec<u64> {
            let mut rng = SplitMix64::new(99);
            let tape = Tape::new();
            let xs: Vec<Var> = (0..6).map(|_| tape.leaf(rng.uniform(-1.0, 1.0))).collect();
            let mut out = tape.lift(1.0);
            for (i, x) in xs.iter().enumerate() {
                out = out * (*x * (i as f64 + 0.5)).tanh() + x.exp();
            }
            tape.gradient(out, &xs)
                .unwrap()
                .iter()
                .map(|g| g.to_bits())
                .collect()
        };
        assert_eq!(run(), run());
    }
}
