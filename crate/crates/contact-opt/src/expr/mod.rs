//! Scalar expressions over named variables.
//!
//! Every Hamiltonian, cost function, dynamics component and energy law in
//! this crate is an [`Expr`]: an immutable syntax tree parsed from text (see
//! the grammar in [`parse`]) or assembled with the combinators below.
//! Evaluation propagates first- and second-order jets (dual / hyper-dual
//! numbers), so derivatives are exact to floating-point rounding; finite
//! differences appear only in tests as an independent check.
//!
//! Expressions are immutable after construction and evaluation is pure, so
//! values can be shared and evaluated concurrently.

mod calculus;
mod eval;
mod parser;

pub use eval::{Bindings, BoundExpr, JetValue};

use crate::error::{Error, Result};
use std::fmt;

/// Binary operators, in source form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Built-in functions callable as `name(arg)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Tanh,
    Cosh,
    Sinh,
    Abs,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
            Func::Cosh => "cosh",
            Func::Sinh => "sinh",
            Func::Abs => "abs",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            "cosh" => Func::Cosh,
            "sinh" => Func::Sinh,
            "abs" => Func::Abs,
            _ => return None,
        })
    }
}

/// Expression tree node. `pow(a, b)` is canonicalized to `Bin(Pow, ..)` at
/// parse time so that printing and re-parsing yield identical trees.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(String),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed scalar expression together with the ordered list of variable
/// names it may reference (first-appearance order).
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    vars: Vec<String>,
}

impl Expr {
    pub(crate) fn from_node(root: Node) -> Expr {
        let mut vars = Vec::new();
        collect_vars(&root, &mut vars);
        Expr { root, vars }
    }

    /// Parse `src` under the grammar
    /// `expr := term (('+'|'-') term)*; term := factor (('*'|'/') factor)*;
    /// factor := '-' factor | power; power := atom ('^' factor)?;
    /// atom := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'`.
    ///
    /// `^` is right-associative and binds tighter than unary minus; there is
    /// no implicit multiplication.
    pub fn parse(src: &str) -> Result<Expr> {
        parser::parse(src)
    }

    /// Variable names this expression may reference, in first-appearance order.
    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn references(&self, name: &str) -> bool {
        self.vars.iter().any(|v| v == name)
    }

    pub(crate) fn root(&self) -> &Node {
        &self.root
    }

    /// Evaluate at a point binding every referenced variable.
    pub fn eval(&self, point: &Bindings) -> Result<f64> {
        eval::eval_node(&self.root, &|name| point.get(name))
    }

    /// Evaluate with exact first (and optionally second) derivatives with
    /// respect to the ordered list `wrt`. `order` must be 1 or 2; with 2 the
    /// Hessian is built symmetrically (not approximated).
    pub fn eval_jet(&self, point: &Bindings, wrt: &[&str], order: u8) -> Result<JetValue> {
        eval::eval_jet(self, point, wrt, order)
    }

    /// Resolve this expression against a fixed name layout for repeated
    /// evaluation. Every referenced variable must appear in `layout`.
    pub fn bind(&self, layout: &[String]) -> Result<BoundExpr> {
        eval::bind(self, layout)
    }

    /// Exact partial derivative as a new expression tree.
    pub fn diff(&self, var: &str) -> Expr {
        Expr::from_node(calculus::diff_node(&self.root, var))
    }

    /// Replace every occurrence of `var` by `replacement`.
    pub fn subst(&self, var: &str, replacement: &Expr) -> Expr {
        Expr::from_node(calculus::subst_node(&self.root, var, &replacement.root))
    }

    /// Rename a variable (capture-free since variables are leaves).
    pub fn rename(&self, from: &str, to: &str) -> Expr {
        self.subst(from, &Expr::var(to))
    }

    // ---- combinators -------------------------------------------------

    pub fn num(value: f64) -> Expr {
        Expr::from_node(Node::Num(value))
    }

    pub fn var(name: &str) -> Expr {
        Expr::from_node(Node::Var(name.to_string()))
    }

    pub fn neg(self) -> Expr {
        Expr::from_node(calculus::fold_neg(self.root))
    }

    pub fn add(self, rhs: Expr) -> Expr {
        Expr::from_node(calculus::fold_bin(BinOp::Add, self.root, rhs.root))
    }

    pub fn sub(self, rhs: Expr) -> Expr {
        Expr::from_node(calculus::fold_bin(BinOp::Sub, self.root, rhs.root))
    }

    pub fn mul(self, rhs: Expr) -> Expr {
        Expr::from_node(calculus::fold_bin(BinOp::Mul, self.root, rhs.root))
    }

    pub fn div(self, rhs: Expr) -> Expr {
        Expr::from_node(calculus::fold_bin(BinOp::Div, self.root, rhs.root))
    }

    pub fn pow(self, rhs: Expr) -> Expr {
        Expr::from_node(calculus::fold_bin(BinOp::Pow, self.root, rhs.root))
    }

    pub fn call(func: Func, arg: Expr) -> Expr {
        Expr::from_node(Node::Call(func, Box::new(arg.root)))
    }

    pub fn scale(self, c: f64) -> Expr {
        Expr::num(c).mul(self)
    }

    /// Sum of expressions; empty sums are the literal 0.
    pub fn sum(terms: impl IntoIterator<Item = Expr>) -> Expr {
        let mut acc: Option<Expr> = None;
        for t in terms {
            acc = Some(match acc {
                None => t,
                Some(a) => a.add(t),
            });
        }
        acc.unwrap_or_else(|| Expr::num(0.0))
    }

    /// True if the tree is the literal 0 (after fold-level simplification).
    pub fn is_zero(&self) -> bool {
        matches!(self.root, Node::Num(v) if v == 0.0)
    }
}

fn collect_vars(node: &Node, out: &mut Vec<String>) {
    match node {
        Node::Num(_) => {}
        Node::Var(name) => {
            if !out.iter().any(|v| v == name) {
                out.push(name.clone());
            }
        }
        Node::Neg(inner) => collect_vars(inner, out),
        Node::Bin(_, a, b) => {
            collect_vars(a, out);
            collect_vars(b, out);
        }
        Node::Call(_, a) => collect_vars(a, out),
    }
}

// ---- printing --------------------------------------------------------

fn precedence(node: &Node) -> u8 {
    match node {
        Node::Num(v) if *v < 0.0 => 1, // prints with a leading '-'
        Node::Num(_) | Node::Var(_) | Node::Call(..) => 5,
        Node::Neg(_) => 1,
        Node::Bin(BinOp::Add | BinOp::Sub, ..) => 2,
        Node::Bin(BinOp::Mul | BinOp::Div, ..) => 3,
        Node::Bin(BinOp::Pow, ..) => 4,
    }
}

fn write_node(f: &mut fmt::Formatter<'_>, node: &Node, min_prec: u8) -> fmt::Result {
    let prec = precedence(node);
    let parens = prec < min_prec;
    if parens {
        write!(f, "(")?;
    }
    match node {
        Node::Num(v) => write!(f, "{v}")?,
        Node::Var(name) => write!(f, "{name}")?,
        Node::Neg(inner) => {
            write!(f, "-")?;
            write_node(f, inner, 4)?;
        }
        Node::Bin(op, a, b) => {
            let (sym, lp, rp) = match op {
                BinOp::Add => (" + ", 2, 2),
                // the right operand of '-' and '/' needs the next level up
                BinOp::Sub => (" - ", 2, 3),
                BinOp::Mul => ("*", 3, 3),
                BinOp::Div => ("/", 3, 4),
                // right-associative, left operand must be atomic
                BinOp::Pow => ("^", 5, 4),
            };
            write_node(f, a, lp)?;
            write!(f, "{sym}")?;
            write_node(f, b, rp)?;
        }
        Node::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_node(f, a, 0)?;
            write!(f, ")")?;
        }
    }
    if parens {
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.root, 0)
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, self, 0)
    }
}

pub(crate) fn unbound(name: &str) -> Error {
    Error::UnboundVariable {
        name: name.to_string(),
    }
}
