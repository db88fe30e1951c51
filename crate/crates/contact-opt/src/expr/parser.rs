//! Recursive-descent parser for the expression grammar.

use super::{BinOp, Expr, Func, Node};
use crate::error::{Error, Result};

pub(super) fn parse(src: &str) -> Result<Expr> {
    let mut p = Parser {
        src,
        bytes: src.as_bytes(),
        pos: 0,
    };
    p.skip_ws();
    if p.pos >= p.bytes.len() {
        return Err(Error::EmptyExpression);
    }
    let node = p.expr()?;
    p.skip_ws();
    if p.pos < p.bytes.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(Expr::from_node(node))
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::Syntax {
            offset: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while matches!(self.bytes.get(self.pos), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, byte: u8) -> bool {
        if self.peek() == Some(byte) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut node = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    node = Node::Bin(BinOp::Add, Box::new(node), Box::new(rhs));
                }
                Some(b'-') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    node = Node::Bin(BinOp::Sub, Box::new(node), Box::new(rhs));
                }
                _ => return Ok(node),
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut node = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    node = Node::Bin(BinOp::Mul, Box::new(node), Box::new(rhs));
                }
                Some(b'/') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    node = Node::Bin(BinOp::Div, Box::new(node), Box::new(rhs));
                }
                _ => return Ok(node),
            }
        }
    }

    fn factor(&mut self) -> Result<Node> {
        if self.eat(b'-') {
            let inner = self.factor()?;
            return Ok(Node::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat(b'^') {
            // right-associative: the exponent is a factor, so `2^-3` and
            // `a^b^c` (= a^(b^c)) parse as expected
            let exp = self.factor()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek() {
            None => Err(self.err("expected expression")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident_or_call(),
            Some(_) => Err(self.err("expected number, name or `(`")),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        while matches!(self.bytes.get(self.pos), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.bytes.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            while matches!(self.bytes.get(self.pos), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        if matches!(self.bytes.get(self.pos), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.bytes.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if matches!(self.bytes.get(self.pos), Some(c) if c.is_ascii_digit()) {
                while matches!(self.bytes.get(self.pos), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                // `1e` with no digits: the `e` belongs to an identifier, which
                // is a syntax error right after a number anyway
                self.pos = mark;
            }
        }
        let text = &self.src[start..self.pos];
        let value: f64 = text.parse().map_err(|_| Error::Syntax {
            offset: start,
            msg: format!("invalid number `{text}`"),
        })?;
        // no implicit multiplication: a number directly followed by a name is
        // rejected here with a precise offset
        if matches!(self.bytes.get(self.pos), Some(c) if c.is_ascii_alphabetic() || *c == b'_') {
            return Err(self.err("implicit multiplication is not allowed; use `*`"));
        }
        Ok(Node::Num(value))
    }

    fn ident_or_call(&mut self) -> Result<Node> {
        let start = self.pos;
        while matches!(self.bytes.get(self.pos), Some(c) if c.is_ascii_alphanumeric() || *c == b'_')
        {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        if self.peek() == Some(b'(') {
            self.pos += 1;
            let mut args = Vec::new();
            loop {
                args.push(self.expr()?);
                if self.eat(b',') {
                    continue;
                }
                if self.eat(b')') {
                    break;
                }
                return Err(self.err("expected `,` or `)` in call"));
            }
            if name == "pow" {
                if args.len() != 2 {
                    return Err(Error::Syntax {
                        offset: start,
                        msg: format!("pow expects 2 arguments, got {}", args.len()),
                    });
                }
                let exp = args.pop().unwrap();
                let base = args.pop().unwrap();
                return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
            }
            let func = Func::from_name(name).ok_or_else(|| Error::UnknownFunction {
                name: name.to_string(),
                offset: start,
            })?;
            if args.len() != 1 {
                return Err(Error::Syntax {
                    offset: start,
                    msg: format!("{name} expects 1 argument, got {}", args.len()),
                });
            }
            return Ok(Node::Call(func, Box::new(args.pop().unwrap())));
        }
        Ok(Node::Var(name.to_string()))
    }
}
