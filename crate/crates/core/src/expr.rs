//! A small closed-form expression language for rates, drifts, densities and tilts.
//!
//! Expressions are parsed once and evaluated many times, so the parser resolves
//! every identifier to a fixed variable slot up front.
//!
//! ```text
//! expr  := term (("+" | "-") term)*
//! term  := unary (("*" | "/") unary)*
//! unary := "-" unary | power
//! power := atom ("^" unary)?
//! atom  := number | variable | func "(" expr ("," expr)* ")" | "(" expr ")"
//! ```
//!
//! Variables: `t`, the current point `x` (`x0`, `x1`, ...), the landing point
//! `y` (`y0`, ...) and the jump `xi = y - x` (`xi0`, ...). A bare `x`, `y` or
//! `xi` names coordinate 0. Functions: `exp`, `log` (alias `ln`), `sqrt`,
//! `abs`, `min`, `max`.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    Time,
    Point,
    Landing,
    Jump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Exp,
    Log,
    Sqrt,
    Abs,
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Var(VarKind, usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// Evaluation context. Slices may be empty when the expression does not use them.
#[derive(Debug, Clone, Copy)]
pub struct Vars<'a> {
    pub t: f64,
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub xi: &'a [f64],
}

impl<'a> Vars<'a> {
    pub fn at(t: f64, x: &'a [f64]) -> Self {
        Vars { t, x, y: &[], xi: &[] }
    }

    pub fn jump(t: f64, x: &'a [f64], y: &'a [f64], xi: &'a [f64]) -> Self {
        Vars { t, x, y, xi }
    }
}

/// A parsed expression together with its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self> {
        let tokens = tokenize(source)?;
        let mut parser = Parser { tokens: &tokens, pos: 0, source };
        let root = parser.expr()?;
        if parser.pos != tokens.len() {
            return Err(parser.error("unexpected trailing input"));
        }
        Ok(Expr { source: source.trim().to_string(), root })
    }

    pub fn constant(value: f64) -> Self {
        Expr { source: format!("{value:?}"), root: Node::Const(value) }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, vars: &Vars<'_>) -> f64 {
        eval(&self.root, vars)
    }

    /// True when the expression reads the given kind of variable.
    pub fn uses(&self, kind: VarKind) -> bool {
        fn walk(node: &Node, kind: VarKind) -> bool {
            match node {
                Node::Const(_) => false,
                Node::Var(k, _) => *k == kind,
                Node::Neg(a) => walk(a, kind),
                Node::Add(a, b)
                | Node::Sub(a, b)
                | Node::Mul(a, b)
                | Node::Div(a, b)
                | Node::Pow(a, b) => walk(a, kind) || walk(b, kind),
                Node::Call(_, args) => args.iter().any(|a| walk(a, kind)),
            }
        }
        walk(&self.root, kind)
    }

    /// Largest coordinate index referenced for `kind`, if any.
    pub fn max_index(&self, kind: VarKind) -> Option<usize> {
        fn walk(node: &Node, kind: VarKind, best: &mut Option<usize>) {
            match node {
                Node::Const(_) => {}
                Node::Var(k, i) => {
                    if *k == kind {
                        *best = Some(best.map_or(*i, |b| b.max(*i)));
                    }
                }
                Node::Neg(a) => walk(a, kind, best),
                Node::Add(a, b)
                | Node::Sub(a, b)
                | Node::Mul(a, b)
                | Node::Div(a, b)
                | Node::Pow(a, b) => {
                    walk(a, kind, best);
                    walk(b, kind, best);
                }
                Node::Call(_, args) => args.iter().for_each(|a| walk(a, kind, best)),
            }
        }
        let mut best = None;
        walk(&self.root, kind, &mut best);
        best
    }

    /// Rejects variables outside `allowed` or coordinates beyond `dimension`.
    pub fn check_scope(&self, allowed: &[VarKind], dimension: usize) -> Result<()> {
        for kind in [VarKind::Time, VarKind::Point, VarKind::Landing, VarKind::Jump] {
            if !self.uses(kind) {
                continue;
            }
            if !allowed.contains(&kind) {
                return Err(Error::Expression(format!(
                    "`{}`: variable kind {kind:?} is not available here",
                    self.source
                )));
            }
            if let Some(i) = self.max_index(kind) {
                if kind != VarKind::Time && i >= dimension {
                    return Err(Error::Expression(format!(
                        "`{}`: coordinate {i} out of range for dimension {dimension}",
                        self.source
                    )));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let src = String::deserialize(d)?;
        Expr::parse(&src).map_err(serde::de::Error::custom)
    }
}

fn coord(v: &[f64], i: usize) -> f64 {
    v.get(i).copied().unwrap_or(f64::NAN)
}

fn eval(node: &Node, v: &Vars<'_>) -> f64 {
    match node {
        Node::Const(c) => *c,
        Node::Var(kind, i) => match kind {
            VarKind::Time => v.t,
            VarKind::Point => coord(v.x, *i),
            VarKind::Landing => coord(v.y, *i),
            VarKind::Jump => coord(v.xi, *i),
        },
        Node::Neg(a) => -eval(a, v),
        Node::Add(a, b) => eval(a, v) + eval(b, v),
        Node::Sub(a, b) => eval(a, v) - eval(b, v),
        Node::Mul(a, b) => eval(a, v) * eval(b, v),
        Node::Div(a, b) => eval(a, v) / eval(b, v),
        Node::Pow(a, b) => {
            let base = eval(a, v);
            let exp = eval(b, v);
            if exp.fract() == 0.0 && exp.abs() <= 64.0 {
                base.powi(exp as i32)
            } else {
                base.powf(exp)
            }
        }
        Node::Call(func, args) => {
            let first = eval(&args[0], v);
            match func {
                Func::Exp => first.exp(),
                Func::Log => first.ln(),
                Func::Sqrt => first.sqrt(),
                Func::Abs => first.abs(),
                Func::Min => args[1..].iter().fold(first, |m, a| m.min(eval(a, v))),
                Func::Max => args[1..].iter().fold(first, |m, a| m.max(eval(a, v))),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value = text
                .parse::<f64>()
                .map_err(|_| Error::Expression(format!("`{src}`: bad number `{text}`")))?;
            out.push(Token::Num(value));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^(),".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else {
            return Err(Error::Expression(format!("`{src}`: unexpected character `{c}`")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    source: &'a str,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> Error {
        Error::Expression(format!("`{}`: {msg} at token {}", self.source, self.pos))
    }

    fn peek_op(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some(Token::Op(c)) => Some(*c),
            _ => None,
        }
    }

    fn expect(&mut self, op: char) -> Result<()> {
        if self.peek_op() == Some(op) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected `{op}`")))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Node::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Node::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        if self.peek_op() == Some('-') {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.peek_op() == Some('+') {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.tokens.get(self.pos).cloned() {
            Some(Token::Num(v)) => {
                self.pos += 1;
                Ok(Node::Const(v))
            }
            Some(Token::Op('(')) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            Some(Token::Ident(name)) => {
                self.pos += 1;
                if self.peek_op() == Some('(') {
                    self.pos += 1;
                    let func = match name.as_str() {
                        "exp" => Func::Exp,
                        "log" | "ln" => Func::Log,
                        "sqrt" => Func::Sqrt,
                        "abs" => Func::Abs,
                        "min" => Func::Min,
                        "max" => Func::Max,
                        _ => return Err(self.error(&format!("unknown function `{name}`"))),
                    };
                    let mut args = vec![self.expr()?];
                    while self.peek_op() == Some(',') {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    let variadic = matches!(func, Func::Min | Func::Max);
                    if (variadic && args.len() < 2) || (!variadic && args.len() != 1) {
                        return Err(self.error(&format!("wrong arity for `{name}`")));
                    }
                    return Ok(Node::Call(func, args));
                }
                variable(&name).ok_or_else(|| self.error(&format!("unknown variable `{name}`")))
            }
            _ => Err(self.error("expected a value")),
        }
    }
}

fn variable(name: &str) -> Option<Node> {
    if name == "t" {
        return Some(Node::Var(VarKind::Time, 0));
    }
    if name == "pi" {
        return Some(Node::Const(std::f64::consts::PI));
    }
    // `xi` must be tried before `x`.
    for (prefix, kind) in [("xi", VarKind::Jump), ("x", VarKind::Point), ("y", VarKind::Landing)] {
        if let Some(rest) = name.strip_prefix(prefix) {
            if rest.is_empty() {
                return Some(Node::Var(kind, 0));
            }
            if let Ok(i) = rest.parse::<usize>() {
                return Some(Node::Var(kind, i));
            }
        }
    }
    None
}
