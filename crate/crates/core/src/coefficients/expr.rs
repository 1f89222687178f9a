//! Small arithmetic expression language used for every user-supplied field.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          right associative
//! primary := number | 'pi' | var | func '(' expr ')' | '(' expr ')'
//! var     := 'x'k | 'y'k | 't'             k >= 1
//! func    := exp | sqrt | sin | cos | abs
//! ```
//!
//! Identifiers are resolved while parsing, so evaluation never looks up names.

use std::fmt;

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unknown identifier `{name}` at byte {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    /// `x<k>`, stored zero based.
    X(usize),
    /// `y<k>`, stored zero based.
    Y(usize),
    T,
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::Y(i) => write!(f, "y{}", i + 1),
            Var::T => f.write_str("t"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Sqrt,
    Sin,
    Cos,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "abs" => Func::Abs,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// Parsed expression together with its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    source: String,
}

/// Variable values for one evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Bindings<'a, S> {
    pub x: &'a [S],
    pub y: &'a [S],
    pub t: Option<S>,
}

impl<'a, S> Bindings<'a, S> {
    pub fn x(x: &'a [S]) -> Self {
        Bindings { x, y: &[], t: None }
    }

    pub fn xy(x: &'a [S], y: &'a [S]) -> Self {
        Bindings { x, y, t: None }
    }
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self, ExprError> {
        let mut p = Parser {
            src: source.as_bytes(),
            pos: 0,
        };
        p.skip_ws();
        if p.at_end() {
            return Err(ExprError::Syntax {
                pos: 0,
                message: "empty expression".into(),
            });
        }
        let root = p.expr()?;
        p.skip_ws();
        if !p.at_end() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(Expr {
            root,
            source: source.to_string(),
        })
    }

    /// Literal constant expression.
    pub fn constant(value: f64) -> Self {
        Expr {
            root: Node::Num(value),
            source: format!("{value:?}"),
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn eval<S: Real>(&self, b: &Bindings<'_, S>) -> Result<S, ExprError> {
        eval_node(&self.root, b)
    }

    /// Value of an expression without free variables.
    pub fn constant_value(&self) -> Option<f64> {
        if self.variables().is_empty() {
            self.eval::<f64>(&Bindings::x(&[])).ok()
        } else {
            None
        }
    }

    /// True when the expression is identically zero by construction (no variables, value 0).
    pub fn is_zero(&self) -> bool {
        self.constant_value() == Some(0.0)
    }

    /// Every variable referenced, in first-occurrence order.
    pub fn variables(&self) -> Vec<Var> {
        let mut out = Vec::new();
        collect_vars(&self.root, &mut out);
        out
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl std::str::FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

fn collect_vars(node: &Node, out: &mut Vec<Var>) {
    match node {
        Node::Num(_) => {}
        Node::Var(v) => {
            if !out.contains(v) {
                out.push(*v);
            }
        }
        Node::Neg(a) | Node::Call(_, a) => collect_vars(a, out),
        Node::Bin(_, a, b) => {
            collect_vars(a, out);
            collect_vars(b, out);
        }
    }
}

fn eval_node<S: Real>(node: &Node, b: &Bindings<'_, S>) -> Result<S, ExprError> {
    Ok(match node {
        Node::Num(v) => S::lit(*v),
        Node::Var(var) => {
            let found = match *var {
                Var::X(i) => b.x.get(i).copied(),
                Var::Y(i) => b.y.get(i).copied(),
                Var::T => b.t,
            };
            found.ok_or_else(|| ExprError::UnboundVariable(var.to_string()))?
        }
        Node::Neg(a) => -eval_node(a, b)?,
        Node::Bin(op, l, r) => {
            let l = eval_node(l, b)?;
            let r = eval_node(r, b)?;
            match op {
                BinOp::Add => l + r,
                BinOp::Sub => l - r,
                BinOp::Mul => l * r,
                BinOp::Div => {
                    if r == S::zero() {
                        return Err(ExprError::Domain(format!("division by zero ({l} / 0)")));
                    }
                    l / r
                }
                BinOp::Pow => {
                    let v = l.powf(r);
                    if v.is_nan() {
                        return Err(ExprError::Domain(format!("{l} ^ {r} is undefined")));
                    }
                    v
                }
            }
        }
        Node::Call(func, a) => {
            let a = eval_node(a, b)?;
            match func {
                Func::Exp => a.exp(),
                Func::Sqrt => {
                    if a < S::zero() {
                        return Err(ExprError::Domain(format!("sqrt of negative value {a}")));
                    }
                    a.sqrt()
                }
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Abs => a.abs(),
            }
        }
    })
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn error(&self, message: &str) -> ExprError {
        ExprError::Syntax {
            pos: self.pos,
            message: message.to_string(),
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat(b'+') {
                BinOp::Add
            } else if self.eat(b'-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat(b'*') {
                BinOp::Mul
            } else if self.eat(b'/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.primary()?;
        if self.eat(b'^') {
            let exponent = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(c) => Err(self.error(&format!("unexpected character `{}`", c as char))),
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == b'.') {
            self.pos += 1;
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii slice");
        text.parse::<f64>()
            .map(Node::Num)
            .map_err(|_| ExprError::Syntax {
                pos: start,
                message: format!("malformed number `{text}`"),
            })
    }

    fn identifier(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii slice");
        if let Some(func) = Func::from_name(name) {
            if !self.eat(b'(') {
                return Err(self.error(&format!("expected `(` after `{name}`")));
            }
            let arg = self.expr()?;
            if !self.eat(b')') {
                return Err(self.error("expected `)`"));
            }
            return Ok(Node::Call(func, Box::new(arg)));
        }
        if name == "pi" {
            return Ok(Node::Num(std::f64::consts::PI));
        }
        if name == "t" {
            return Ok(Node::Var(Var::T));
        }
        let indexed = |prefix: char| -> Option<usize> {
            let digits = name.strip_prefix(prefix)?;
            if digits.is_empty() || digits.starts_with('0') {
                return None;
            }
            digits.parse::<usize>().ok().map(|k| k - 1)
        };
        if let Some(i) = indexed('x') {
            return Ok(Node::Var(Var::X(i)));
        }
        if let Some(i) = indexed('y') {
            return Ok(Node::Var(Var::Y(i)));
        }
        Err(ExprError::UnknownIdentifier {
            name: name.to_string(),
            pos: start,
        })
    }
}
