//! Symbolic derivative and substitution on expression trees.
//!
//! These exist so that derived objects (stationarity constraints, assembled
//! Hamiltonians, state-equation residuals) are themselves printable [`Expr`]
//! values. Numerical derivatives of a *given* expression always go through
//! the jet evaluator, never through these trees.

use super::{BinOp, Func, Node};

/// Constant folding applied when trees are assembled. Only identities that
/// hold for all finite operands are folded; `0 * f` is reduced to `0`, which
/// also drops any domain errors of `f`, acceptable for assembled plumbing.
pub(super) fn fold_bin(op: BinOp, a: Node, b: Node) -> Node {
    use Node::Num;
    match (op, &a, &b) {
        (_, Num(x), Num(y)) => {
            let v = match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div if *y != 0.0 => x / y,
                _ => return Node::Bin(op, Box::new(a), Box::new(b)),
            };
            return Num(v);
        }
        (BinOp::Add, Num(x), _) if *x == 0.0 => return b,
        (BinOp::Add, _, Num(y)) if *y == 0.0 => return a,
        (BinOp::Sub, _, Num(y)) if *y == 0.0 => return a,
        (BinOp::Sub, Num(x), _) if *x == 0.0 => return fold_neg(b),
        (BinOp::Mul, Num(x), _) if *x == 0.0 => return Num(0.0),
        (BinOp::Mul, _, Num(y)) if *y == 0.0 => return Num(0.0),
        (BinOp::Mul, Num(x), _) if *x == 1.0 => return b,
        (BinOp::Mul, _, Num(y)) if *y == 1.0 => return a,
        (BinOp::Mul, Num(x), _) if *x == -1.0 => return fold_neg(b),
        (BinOp::Mul, _, Num(y)) if *y == -1.0 => return fold_neg(a),
        (BinOp::Div, Num(x), _) if *x == 0.0 => return Num(0.0),
        (BinOp::Div, _, Num(y)) if *y == 1.0 => return a,
        (BinOp::Pow, _, Num(y)) if *y == 1.0 => return a,
        (BinOp::Pow, _, Num(y)) if *y == 0.0 => return Num(1.0),
        _ => {}
    }
    Node::Bin(op, Box::new(a), Box::new(b))
}

pub(super) fn fold_neg(a: Node) -> Node {
    match a {
        Node::Num(v) => Node::Num(-v),
        Node::Neg(inner) => *inner,
        other => Node::Neg(Box::new(other)),
    }
}

fn add(a: Node, b: Node) -> Node {
    fold_bin(BinOp::Add, a, b)
}
fn sub(a: Node, b: Node) -> Node {
    fold_bin(BinOp::Sub, a, b)
}
fn mul(a: Node, b: Node) -> Node {
    fold_bin(BinOp::Mul, a, b)
}
fn div(a: Node, b: Node) -> Node {
    fold_bin(BinOp::Div, a, b)
}
fn pow(a: Node, b: Node) -> Node {
    fold_bin(BinOp::Pow, a, b)
}
fn num(v: f64) -> Node {
    Node::Num(v)
}
fn call(f: Func, a: Node) -> Node {
    Node::Call(f, Box::new(a))
}

pub(super) fn subst_node(node: &Node, var: &str, replacement: &Node) -> Node {
    match node {
        Node::Num(v) => Node::Num(*v),
        Node::Var(name) => {
            if name == var {
                replacement.clone()
            } else {
                Node::Var(name.clone())
            }
        }
        Node::Neg(inner) => fold_neg(subst_node(inner, var, replacement)),
        Node::Bin(op, a, b) => fold_bin(
            *op,
            subst_node(a, var, replacement),
            subst_node(b, var, replacement),
        ),
        Node::Call(f, a) => call(*f, subst_node(a, var, replacement)),
    }
}

pub(super) fn diff_node(node: &Node, var: &str) -> Node {
    match node {
        Node::Num(_) => num(0.0),
        Node::Var(name) => num(if name == var { 1.0 } else { 0.0 }),
        Node::Neg(inner) => fold_neg(diff_node(inner, var)),
        Node::Bin(op, a, b) => {
            let da = diff_node(a, var);
            let db = diff_node(b, var);
            match op {
                BinOp::Add => add(da, db),
                BinOp::Sub => sub(da, db),
                BinOp::Mul => add(mul(da, (**b).clone()), mul((**a).clone(), db)),
                BinOp::Div => {
                    // (a/b)' = a'/b - a b'/b^2
                    sub(
                        div(da, (**b).clone()),
                        div(mul((**a).clone(), db), pow((**b).clone(), num(2.0))),
                    )
                }
                BinOp::Pow => {
                    let a_node = (**a).clone();
                    let b_node = (**b).clone();
                    if matches!(db, Node::Num(v) if v == 0.0) {
                        // constant exponent: c a^(c-1) a'
                        let c_minus_1 = sub(b_node.clone(), num(1.0));
                        mul(mul(b_node, pow(a_node, c_minus_1)), da)
                    } else {
                        // a^b (b' ln a + b a'/a)
                        let term = add(
                            mul(db, call(Func::Log, a_node.clone())),
                            div(mul(b_node.clone(), da), a_node.clone()),
                        );
                        mul(pow(a_node, b_node), term)
                    }
                }
            }
        }
        Node::Call(f, a) => {
            let da = diff_node(a, var);
            if matches!(da, Node::Num(v) if v == 0.0) {
                return num(0.0);
            }
            let a_node = (**a).clone();
            let outer = match f {
                Func::Sin => call(Func::Cos, a_node),
                Func::Cos => fold_neg(call(Func::Sin, a_node)),
                Func::Tan => {
                    // 1 + tan^2
                    add(num(1.0), pow(call(Func::Tan, a_node), num(2.0)))
                }
                Func::Exp => call(Func::Exp, a_node),
                Func::Log => div(num(1.0), a_node),
                Func::Sqrt => div(num(0.5), call(Func::Sqrt, a_node)),
                Func::Tanh => sub(num(1.0), pow(call(Func::Tanh, a_node), num(2.0))),
                Func::Cosh => call(Func::Sinh, a_node),
                Func::Sinh => call(Func::Cosh, a_node),
                Func::Abs => div(a_node.clone(), call(Func::Abs, a_node)),
            };
            mul(outer, da)
        }
    }
}
