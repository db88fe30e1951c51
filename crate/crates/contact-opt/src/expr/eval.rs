//! Evaluation: scalar values and first/second-order jets.
//!
//! Jets are propagated forward through the tree (dual numbers for order 1,
//! the dense second-order analogue of hyper-duals for order 2). The Hessian
//! is stored as a packed symmetric lower triangle, so symmetry holds by
//! construction.

use super::{BinOp, Expr, Func, Node};
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use smallvec::SmallVec;
use std::sync::Arc;

/// Ordered name → value bindings.
#[derive(Debug, Clone, Default)]
pub struct Bindings(Vec<(String, f64)>);

impl Bindings {
    pub fn new() -> Bindings {
        Bindings(Vec::new())
    }

    pub fn from_pairs<I, S>(pairs: I) -> Bindings
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut b = Bindings::new();
        for (name, value) in pairs {
            b.set(&name.into(), value);
        }
        b
    }

    /// Zip names with values; lengths must match.
    pub fn from_slices(names: &[String], values: &[f64]) -> Bindings {
        assert_eq!(names.len(), values.len(), "bindings length mismatch");
        Bindings(names.iter().cloned().zip(values.iter().copied()).collect())
    }

    pub fn set(&mut self, name: &str, value: f64) {
        if let Some(slot) = self.0.iter_mut().find(|(n, _)| n == name) {
            slot.1 = value;
        } else {
            self.0.push((name.to_string(), value));
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(n, v)| (n.as_str(), *v))
    }
}

/// Value with exact derivatives with respect to a declared variable list.
#[derive(Debug, Clone)]
pub struct JetValue {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Present when requested with `order = 2`; symmetric by construction.
    pub hess: Option<DMatrix<f64>>,
}

// ---- internal jet arithmetic ------------------------------------------

const STACK_GRAD: usize = 8;

#[derive(Debug, Clone)]
struct Jet {
    v: f64,
    g: SmallVec<[f64; STACK_GRAD]>,
    /// Packed symmetric lower triangle, length d(d+1)/2; `None` for order 1.
    h: Option<Vec<f64>>,
}

#[inline]
fn hlen(d: usize) -> usize {
    d * (d + 1) / 2
}

impl Jet {
    fn constant(v: f64, d: usize, order2: bool) -> Jet {
        Jet {
            v,
            g: smallvec::smallvec![0.0; d],
            h: order2.then(|| vec![0.0; hlen(d)]),
        }
    }

    fn seed(v: f64, index: Option<usize>, d: usize, order2: bool) -> Jet {
        let mut j = Jet::constant(v, d, order2);
        if let Some(i) = index {
            j.g[i] = 1.0;
        }
        j
    }

    fn add_assign(&mut self, b: &Jet) {
        self.v += b.v;
        for (a, bb) in self.g.iter_mut().zip(&b.g) {
            *a += bb;
        }
        if let (Some(h), Some(bh)) = (self.h.as_mut(), b.h.as_ref()) {
            for (a, bb) in h.iter_mut().zip(bh) {
                *a += bb;
            }
        }
    }

    fn sub_assign(&mut self, b: &Jet) {
        self.v -= b.v;
        for (a, bb) in self.g.iter_mut().zip(&b.g) {
            *a -= bb;
        }
        if let (Some(h), Some(bh)) = (self.h.as_mut(), b.h.as_ref()) {
            for (a, bb) in h.iter_mut().zip(bh) {
                *a -= bb;
            }
        }
    }

    fn neg_assign(&mut self) {
        self.v = -self.v;
        for a in self.g.iter_mut() {
            *a = -*a;
        }
        if let Some(h) = self.h.as_mut() {
            for a in h.iter_mut() {
                *a = -*a;
            }
        }
    }

    fn mul_assign(&mut self, b: &Jet) {
        // order matters: the Hessian update reads the untouched gradient
        if let (Some(h), Some(bh)) = (self.h.as_mut(), b.h.as_ref()) {
            let d = self.g.len();
            let mut idx = 0;
            for i in 0..d {
                for j in 0..=i {
                    h[idx] =
                        h[idx] * b.v + self.v * bh[idx] + self.g[i] * b.g[j] + self.g[j] * b.g[i];
                    idx += 1;
                }
            }
        }
        for (a, bb) in self.g.iter_mut().zip(&b.g) {
            *a = *a * b.v + self.v * bb;
        }
        self.v *= b.v;
    }

    fn div_assign(&mut self, b: &Jet) -> std::result::Result<(), &'static str> {
        if b.v == 0.0 {
            return Err("division by zero");
        }
        let q = self.v / b.v;
        self.v = q;
        for (a, bb) in self.g.iter_mut().zip(&b.g) {
            *a = (*a - q * bb) / b.v;
        }
        if let (Some(h), Some(bh)) = (self.h.as_mut(), b.h.as_ref()) {
            let d = self.g.len();
            let mut idx = 0;
            for i in 0..d {
                for j in 0..=i {
                    h[idx] = (h[idx] - self.g[i] * b.g[j] - self.g[j] * b.g[i] - q * bh[idx]) / b.v;
                    idx += 1;
                }
            }
        }
        Ok(())
    }

    /// Replace by `f(self)` given `f`, `f'`, `f''` at the current value.
    fn apply(&mut self, f: f64, f1: f64, f2: f64) {
        if let Some(h) = self.h.as_mut() {
            let d = self.g.len();
            let mut idx = 0;
            for i in 0..d {
                for j in 0..=i {
                    h[idx] = f1 * h[idx] + f2 * self.g[i] * self.g[j];
                    idx += 1;
                }
            }
        }
        for a in self.g.iter_mut() {
            *a *= f1;
        }
        self.v = f;
    }

    fn is_constant(&self) -> bool {
        self.g.iter().all(|&x| x == 0.0)
            && self.h.as_ref().is_none_or(|h| h.iter().all(|&x| x == 0.0))
    }

    fn powi_assign(&mut self, n: i32) -> std::result::Result<(), &'static str> {
        if n < 0 && self.v == 0.0 {
            return Err("zero raised to a negative power");
        }
        let u = self.v;
        let (f, f1, f2) = match n {
            0 => (1.0, 0.0, 0.0),
            1 => (u, 1.0, 0.0),
            _ => (
                u.powi(n),
                f64::from(n) * u.powi(n - 1),
                f64::from(n) * f64::from(n - 1) * u.powi(n - 2),
            ),
        };
        self.apply(f, f1, f2);
        Ok(())
    }

    fn pow_assign(&mut self, b: &Jet) -> std::result::Result<(), &'static str> {
        if b.is_constant() {
            let c = b.v;
            if c.fract() == 0.0 && c.abs() <= 1_000_000.0 {
                return self.powi_assign(c as i32);
            }
            if self.v <= 0.0 {
                return Err("non-integer power of a non-positive base");
            }
            let u = self.v;
            self.apply(
                u.powf(c),
                c * u.powf(c - 1.0),
                c * (c - 1.0) * u.powf(c - 2.0),
            );
            return Ok(());
        }
        // general exponent: a^b = exp(b ln a), requires a > 0
        if self.v <= 0.0 {
            return Err("variable power of a non-positive base");
        }
        let mut ln_a = self.clone();
        let u = ln_a.v;
        ln_a.apply(u.ln(), 1.0 / u, -1.0 / (u * u));
        ln_a.mul_assign(b);
        let e = ln_a.v.exp();
        ln_a.apply(e, e, e);
        *self = ln_a;
        Ok(())
    }

    fn call_assign(&mut self, func: Func) -> std::result::Result<(), &'static str> {
        let u = self.v;
        let (f, f1, f2) = match func {
            Func::Sin => (u.sin(), u.cos(), -u.sin()),
            Func::Cos => (u.cos(), -u.sin(), -u.cos()),
            Func::Tan => {
                let t = u.tan();
                let s = 1.0 + t * t;
                (t, s, 2.0 * t * s)
            }
            Func::Exp => {
                let e = u.exp();
                (e, e, e)
            }
            Func::Log => {
                if u <= 0.0 {
                    return Err("log of a non-positive value");
                }
                (u.ln(), 1.0 / u, -1.0 / (u * u))
            }
            Func::Sqrt => {
                if u < 0.0 {
                    return Err("square root of a negative value");
                }
                if u == 0.0 && !self.is_constant() {
                    return Err("square root is not differentiable at zero");
                }
                let s = u.sqrt();
                if u == 0.0 {
                    (0.0, 0.0, 0.0)
                } else {
                    (s, 0.5 / s, -0.25 / (s * u))
                }
            }
            Func::Tanh => {
                let t = u.tanh();
                let s = 1.0 - t * t;
                (t, s, -2.0 * t * s)
            }
            Func::Cosh => (u.cosh(), u.sinh(), u.cosh()),
            Func::Sinh => (u.sinh(), u.cosh(), u.sinh()),
            Func::Abs => {
                let s = if u > 0.0 {
                    1.0
                } else if u < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                (u.abs(), s, 0.0)
            }
        };
        self.apply(f, f1, f2);
        Ok(())
    }
}

// ---- compiled programs -------------------------------------------------

#[derive(Debug, Clone)]
enum Instr {
    Num(f64),
    Var(usize),
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    PowI(i32),
    Call(Func),
}

/// An expression resolved against a fixed variable layout, compiled to a
/// small stack program for repeated evaluation.
#[derive(Debug, Clone)]
pub struct BoundExpr {
    prog: Vec<Instr>,
    layout: Vec<String>,
    source: Arc<Expr>,
}

pub(super) fn bind(expr: &Expr, layout: &[String]) -> Result<BoundExpr> {
    for v in expr.vars() {
        if !layout.iter().any(|n| n == v) {
            return Err(super::unbound(v));
        }
    }
    let mut prog = Vec::new();
    compile(expr.root(), layout, &mut prog);
    Ok(BoundExpr {
        prog,
        layout: layout.to_vec(),
        source: Arc::new(expr.clone()),
    })
}

fn compile(node: &Node, layout: &[String], prog: &mut Vec<Instr>) {
    match node {
        Node::Num(v) => prog.push(Instr::Num(*v)),
        Node::Var(name) => {
            let slot = layout.iter().position(|n| n == name).expect("checked");
            prog.push(Instr::Var(slot));
        }
        Node::Neg(inner) => {
            compile(inner, layout, prog);
            prog.push(Instr::Neg);
        }
        Node::Bin(BinOp::Pow, a, b) => {
            compile(a, layout, prog);
            match const_exponent(b) {
                Some(n) => prog.push(Instr::PowI(n)),
                None => {
                    compile(b, layout, prog);
                    prog.push(Instr::Pow);
                }
            }
        }
        Node::Bin(op, a, b) => {
            compile(a, layout, prog);
            compile(b, layout, prog);
            prog.push(match op {
                BinOp::Add => Instr::Add,
                BinOp::Sub => Instr::Sub,
                BinOp::Mul => Instr::Mul,
                BinOp::Div => Instr::Div,
                BinOp::Pow => unreachable!(),
            });
        }
        Node::Call(func, a) => {
            compile(a, layout, prog);
            prog.push(Instr::Call(*func));
        }
    }
}

fn const_exponent(node: &Node) -> Option<i32> {
    let v = match node {
        Node::Num(v) => *v,
        Node::Neg(inner) => match inner.as_ref() {
            Node::Num(v) => -*v,
            _ => return None,
        },
        _ => return None,
    };
    (v.fract() == 0.0 && v.abs() <= 1_000_000.0).then_some(v as i32)
}

impl BoundExpr {
    pub fn layout(&self) -> &[String] {
        &self.layout
    }

    pub fn expr(&self) -> &Expr {
        &self.source
    }

    /// Fast scalar evaluation; `values` follows the bound layout.
    pub fn eval(&self, values: &[f64]) -> Result<f64> {
        debug_assert_eq!(values.len(), self.layout.len());
        let mut stack: SmallVec<[f64; 32]> = SmallVec::new();
        for instr in &self.prog {
            match instr {
                Instr::Num(v) => stack.push(*v),
                Instr::Var(slot) => stack.push(values[*slot]),
                Instr::Neg => {
                    let a = stack.last_mut().expect("stack");
                    *a = -*a;
                }
                Instr::Add => {
                    let b = stack.pop().expect("stack");
                    *stack.last_mut().expect("stack") += b;
                }
                Instr::Sub => {
                    let b = stack.pop().expect("stack");
                    *stack.last_mut().expect("stack") -= b;
                }
                Instr::Mul => {
                    let b = stack.pop().expect("stack");
                    *stack.last_mut().expect("stack") *= b;
                }
                Instr::Div => {
                    let b = stack.pop().expect("stack");
                    if b == 0.0 {
                        return Err(self.rich_error(values));
                    }
                    *stack.last_mut().expect("stack") /= b;
                }
                Instr::Pow => {
                    let b = stack.pop().expect("stack");
                    let a = stack.last_mut().expect("stack");
                    let r = a.powf(b);
                    if r.is_nan() && !a.is_nan() && !b.is_nan() {
                        return Err(self.rich_error(values));
                    }
                    if r.is_infinite() && *a == 0.0 {
                        return Err(self.rich_error(values));
                    }
                    *a = r;
                }
                Instr::PowI(n) => {
                    let a = stack.last_mut().expect("stack");
                    if *n < 0 && *a == 0.0 {
                        return Err(self.rich_error(values));
                    }
                    *a = a.powi(*n);
                }
                Instr::Call(func) => {
                    let a = stack.last_mut().expect("stack");
                    let r = match func {
                        Func::Sin => a.sin(),
                        Func::Cos => a.cos(),
                        Func::Tan => a.tan(),
                        Func::Exp => a.exp(),
                        Func::Log => {
                            if *a <= 0.0 {
                                return Err(self.rich_error(values));
                            }
                            a.ln()
                        }
                        Func::Sqrt => {
                            if *a < 0.0 {
                                return Err(self.rich_error(values));
                            }
                            a.sqrt()
                        }
                        Func::Tanh => a.tanh(),
                        Func::Cosh => a.cosh(),
                        Func::Sinh => a.sinh(),
                        Func::Abs => a.abs(),
                    };
                    *a = r;
                }
            }
        }
        Ok(stack.pop().expect("stack"))
    }

    /// Jet evaluation with respect to the layout slots `wrt`.
    pub fn eval_jet_slots(&self, values: &[f64], wrt: &[usize], order: u8) -> Result<JetValue> {
        debug_assert!(order == 1 || order == 2);
        let d = wrt.len();
        let order2 = order == 2;
        let mut stack: Vec<Jet> = Vec::with_capacity(16);
        for instr in &self.prog {
            match instr {
                Instr::Num(v) => stack.push(Jet::constant(*v, d, order2)),
                Instr::Var(slot) => {
                    let index = wrt.iter().position(|s| s == slot);
                    stack.push(Jet::seed(values[*slot], index, d, order2));
                }
                Instr::Neg => stack.last_mut().expect("stack").neg_assign(),
                Instr::Add => {
                    let b = stack.pop().expect("stack");
                    stack.last_mut().expect("stack").add_assign(&b);
                }
                Instr::Sub => {
                    let b = stack.pop().expect("stack");
                    stack.last_mut().expect("stack").sub_assign(&b);
                }
                Instr::Mul => {
                    let b = stack.pop().expect("stack");
                    stack.last_mut().expect("stack").mul_assign(&b);
                }
                Instr::Div => {
                    let b = stack.pop().expect("stack");
                    if stack.last_mut().expect("stack").div_assign(&b).is_err() {
                        return Err(self.rich_error(values));
                    }
                }
                Instr::Pow => {
                    let b = stack.pop().expect("stack");
                    if stack.last_mut().expect("stack").pow_assign(&b).is_err() {
                        return Err(self.rich_error(values));
                    }
                }
                Instr::PowI(n) => {
                    if stack.last_mut().expect("stack").powi_assign(*n).is_err() {
                        return Err(self.rich_error(values));
                    }
                }
                Instr::Call(func) => {
                    if stack.last_mut().expect("stack").call_assign(*func).is_err() {
                        return Err(self.rich_error(values));
                    }
                }
            }
        }
        let jet = stack.pop().expect("stack");
        Ok(jet_value(jet, d, order2))
    }

    /// Scalar evaluation that re-walks the tree on failure so the error names
    /// the offending subexpression.
    fn rich_error(&self, values: &[f64]) -> Error {
        let layout = &self.layout;
        match eval_node(self.source.root(), &|name| {
            layout
                .iter()
                .position(|n| n == name)
                .map(|slot| values[slot])
        }) {
            Err(e) => e,
            // jets can fail where plain values do not (e.g. sqrt at zero);
            // fall back to a whole-expression report
            Ok(_) => Error::Domain {
                msg: "derivative undefined".to_string(),
                subexpr: self.source.to_string(),
            },
        }
    }
}

fn jet_value(jet: Jet, d: usize, order2: bool) -> JetValue {
    let hess = order2.then(|| {
        let packed = jet.h.as_ref().expect("order-2 jet");
        let mut m = DMatrix::zeros(d, d);
        let mut idx = 0;
        for i in 0..d {
            for j in 0..=i {
                m[(i, j)] = packed[idx];
                m[(j, i)] = packed[idx];
                idx += 1;
            }
        }
        m
    });
    JetValue {
        value: jet.v,
        grad: jet.g.to_vec(),
        hess,
    }
}

// ---- friendly AST-walk evaluation ---------------------------------------

/// Scalar evaluation by tree walk with precise domain-error reporting.
pub(super) fn eval_node(node: &Node, resolve: &dyn Fn(&str) -> Option<f64>) -> Result<f64> {
    let domain = |msg: String, at: &Node| Error::Domain {
        msg,
        subexpr: at.to_string(),
    };
    Ok(match node {
        Node::Num(v) => *v,
        Node::Var(name) => resolve(name).ok_or_else(|| super::unbound(name))?,
        Node::Neg(inner) => -eval_node(inner, resolve)?,
        Node::Bin(op, a, b) => {
            let x = eval_node(a, resolve)?;
            let y = eval_node(b, resolve)?;
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => {
                    if y == 0.0 {
                        return Err(domain("division by zero".into(), node));
                    }
                    x / y
                }
                BinOp::Pow => {
                    if x == 0.0 && y < 0.0 {
                        return Err(domain("zero raised to a negative power".into(), node));
                    }
                    let r = if y.fract() == 0.0 && y.abs() <= 1_000_000.0 {
                        x.powi(y as i32)
                    } else {
                        x.powf(y)
                    };
                    if r.is_nan() && !x.is_nan() && !y.is_nan() {
                        return Err(domain(format!("invalid power {x}^{y}"), node));
                    }
                    r
                }
            }
        }
        Node::Call(func, a) => {
            let u = eval_node(a, resolve)?;
            match func {
                Func::Sin => u.sin(),
                Func::Cos => u.cos(),
                Func::Tan => u.tan(),
                Func::Exp => u.exp(),
                Func::Log => {
                    if u <= 0.0 {
                        return Err(domain(format!("log of non-positive value {u}"), node));
                    }
                    u.ln()
                }
                Func::Sqrt => {
                    if u < 0.0 {
                        return Err(domain(format!("square root of negative value {u}"), node));
                    }
                    u.sqrt()
                }
                Func::Tanh => u.tanh(),
                Func::Cosh => u.cosh(),
                Func::Sinh => u.sinh(),
                Func::Abs => u.abs(),
            }
        }
    })
}

pub(super) fn eval_jet(expr: &Expr, point: &Bindings, wrt: &[&str], order: u8) -> Result<JetValue> {
    if order != 1 && order != 2 {
        return Err(Error::Config(format!(
            "jet order must be 1 or 2, got {order}"
        )));
    }
    let layout: Vec<String> = point.names().map(str::to_string).collect();
    let values: Vec<f64> = point.iter().map(|(_, v)| v).collect();
    let bound = bind(expr, &layout)?;
    let mut wrt_slots = Vec::with_capacity(wrt.len());
    for name in wrt {
        let slot = layout
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| super::unbound(name))?;
        wrt_slots.push(slot);
    }
    bound.eval_jet_slots(&values, &wrt_slots, order)
}
