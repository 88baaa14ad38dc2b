//! Arithmetic expressions over chart coordinates `x0..`, fiber coordinates
//! `y0..` and named parameters, evaluated in jet arithmetic.
//!
//! Precedence from tightest to loosest: unary minus, `^` (right
//! associative), `*` `/`, `+` `-`. So `-y0^2` is `(-y0)^2`. Exponents must
//! be rational literals such as `2`, `(3/4)` or `(-1/2)`.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::jets::{Jet, JetError};
use crate::scalar::Scalar;

/// Named real parameters available to expressions.
pub type Params = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("variable `{name}` at byte {offset} is out of range for dimension {dim}")]
    VariableOutOfRange { name: String, offset: usize, dim: usize },
    #[error("fiber variable `{name}` at byte {offset} is not allowed here")]
    FiberVariableNotAllowed { name: String, offset: usize },
    #[error("exponent at byte {offset} is not a rational literal")]
    NonRationalExponent { offset: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("{source} in `{snippet}` (bytes {}..{})", span.start, span.end)]
    Jet {
        source: JetError,
        span: Span,
        snippet: String,
    },
    #[error("parameter `{0}` is not bound")]
    UnboundParameter(String),
    #[error("expression of dimension {expected} evaluated with {got} coordinates")]
    DimMismatch { expected: usize, got: usize },
    #[error("expression references fiber coordinates but none were supplied")]
    MissingFiber,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sqrt" => Func::Sqrt,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Abs => "abs",
        }
    }
}

/// Reduced fraction with positive denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rational {
    pub num: i64,
    pub den: i64,
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl Rational {
    pub fn new(num: i64, den: i64) -> Option<Rational> {
        if den == 0 {
            return None;
        }
        let g = gcd(num, den).max(1);
        let sign = if den < 0 { -1 } else { 1 };
        Some(Rational {
            num: sign * num / g,
            den: sign * den / g,
        })
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

#[derive(Debug, Clone)]
pub enum NodeKind {
    Const(f64),
    X(usize),
    Y(usize),
    Param(String),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
    Pow(Box<Node>, Rational),
}

/// Ast node; equality ignores source spans.
#[derive(Debug, Clone)]
pub struct Node {
    pub kind: NodeKind,
    pub span: Span,
}

impl PartialEq for Node {
    fn eq(&self, other: &Node) -> bool {
        use NodeKind::*;
        match (&self.kind, &other.kind) {
            (Const(a), Const(b)) => a.to_bits() == b.to_bits(),
            (X(a), X(b)) | (Y(a), Y(b)) => a == b,
            (Param(a), Param(b)) => a == b,
            (Neg(a), Neg(b)) => a == b,
            (Binary(o1, l1, r1), Binary(o2, l2, r2)) => o1 == o2 && l1 == l2 && r1 == r2,
            (Call(f1, a1), Call(f2, a2)) => f1 == f2 && a1 == a2,
            (Pow(b1, e1), Pow(b2, e2)) => e1 == e2 && b1 == b2,
            _ => false,
        }
    }
}

/// What an expression may refer to.
#[derive(Debug, Clone, Default)]
pub struct Scope {
    pub dim: usize,
    pub allow_fiber: bool,
    pub params: Vec<String>,
}

impl Scope {
    /// Functions of `(x, y)` without parameters.
    pub fn fiber(dim: usize) -> Scope {
        Scope {
            dim,
            allow_fiber: true,
            params: Vec::new(),
        }
    }

    /// Functions of `x` only.
    pub fn base(dim: usize) -> Scope {
        Scope {
            dim,
            allow_fiber: false,
            params: Vec::new(),
        }
    }

    pub fn with_params<I, S>(mut self, names: I) -> Scope
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.params = names.into_iter().map(Into::into).collect();
        self
    }
}

/// A parsed expression together with its source text.
#[derive(Debug, Clone)]
pub struct Expr {
    root: Node,
    dim: usize,
    source: String,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Expr) -> bool {
        self.dim == other.dim && self.root == other.root
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

fn lex(text: &str) -> Result<Vec<(Tok, Span)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let single = match c {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = single {
            i += 1;
            out.push((tok, Span { start, end: i }));
            continue;
        }
        if c.is_ascii_digit() || c == b'.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let lexeme = &text[start..i];
            let value: f64 = lexeme.parse().map_err(|_| ParseError::Syntax {
                offset: start,
                message: format!("malformed number `{lexeme}`"),
            })?;
            out.push((Tok::Num(value), Span { start, end: i }));
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(text[start..i].to_string()), Span { start, end: i }));
            continue;
        }
        return Err(ParseError::Syntax {
            offset: start,
            message: format!("unexpected character `{}`", &text[start..].chars().next().unwrap()),
        });
    }
    out.push((
        Tok::End,
        Span {
            start: text.len(),
            end: text.len(),
        },
    ));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, Span)>,
    pos: usize,
    scope: &'a Scope,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, Span) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Span, ParseError> {
        if *self.peek() == tok {
            Ok(self.bump().1)
        } else {
            Err(ParseError::Syntax {
                offset: self.span().start,
                message: format!("expected {what}"),
            })
        }
    }

    fn infix(tok: &Tok) -> Option<(u8, u8)> {
        match tok {
            Tok::Plus | Tok::Minus => Some((1, 2)),
            Tok::Star | Tok::Slash => Some((3, 4)),
            Tok::Caret => Some((6, 5)),
            _ => None,
        }
    }

    fn expr(&mut self, min_bp: u8) -> Result<Node, ParseError> {
        let mut lhs = self.prefix()?;
        loop {
            let tok = self.peek().clone();
            let Some((l_bp, r_bp)) = Self::infix(&tok) else {
                break;
            };
            if l_bp < min_bp {
                break;
            }
            self.bump();
            let rhs = self.expr(r_bp)?;
            let span = Span {
                start: lhs.span.start,
                end: rhs.span.end,
            };
            let kind = match tok {
                Tok::Caret => {
                    let exponent =
                        const_rational(&rhs).ok_or(ParseError::NonRationalExponent { offset: rhs.span.start })?;
                    NodeKind::Pow(Box::new(lhs), exponent)
                }
                Tok::Plus => NodeKind::Binary(BinOp::Add, Box::new(lhs), Box::new(rhs)),
                Tok::Minus => NodeKind::Binary(BinOp::Sub, Box::new(lhs), Box::new(rhs)),
                Tok::Star => NodeKind::Binary(BinOp::Mul, Box::new(lhs), Box::new(rhs)),
                Tok::Slash => NodeKind::Binary(BinOp::Div, Box::new(lhs), Box::new(rhs)),
                _ => unreachable!(),
            };
            lhs = Node { kind, span };
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Node, ParseError> {
        let (tok, span) = self.bump();
        match tok {
            Tok::Minus => {
                let inner = self.prefix()?;
                let span = Span {
                    start: span.start,
                    end: inner.span.end,
                };
                Ok(Node {
                    kind: NodeKind::Neg(Box::new(inner)),
                    span,
                })
            }
            Tok::Num(v) => Ok(Node {
                kind: NodeKind::Const(v),
                span,
            }),
            Tok::LParen => {
                let inner = self.expr(0)?;
                let close = self.expect(Tok::RParen, "`)`")?;
                Ok(Node {
                    kind: inner.kind,
                    span: Span {
                        start: span.start,
                        end: close.end,
                    },
                })
            }
            Tok::Ident(name) => self.identifier(name, span),
            Tok::End => Err(ParseError::Syntax {
                offset: span.start,
                message: "unexpected end of input".into(),
            }),
            other => Err(ParseError::Syntax {
                offset: span.start,
                message: format!("unexpected token {other:?}"),
            }),
        }
    }

    fn identifier(&mut self, name: String, span: Span) -> Result<Node, ParseError> {
        if *self.peek() == Tok::LParen {
            return self.call(name, span);
        }
        if name == "pi" {
            return Ok(Node {
                kind: NodeKind::Const(std::f64::consts::PI),
                span,
            });
        }
        if let Some(kind) = self.variable(&name, span)? {
            return Ok(Node { kind, span });
        }
        if self.scope.params.iter().any(|p| *p == name) {
            return Ok(Node {
                kind: NodeKind::Param(name),
                span,
            });
        }
        Err(ParseError::UnknownIdentifier {
            name,
            offset: span.start,
        })
    }

    fn variable(&self, name: &str, span: Span) -> Result<Option<NodeKind>, ParseError> {
        let (fiber, digits) = match name.as_bytes().first() {
            Some(b'x') => (false, &name[1..]),
            Some(b'y') => (true, &name[1..]),
            _ => return Ok(None),
        };
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Ok(None);
        }
        let index: usize = digits.parse().map_err(|_| ParseError::VariableOutOfRange {
            name: name.to_string(),
            offset: span.start,
            dim: self.scope.dim,
        })?;
        if index >= self.scope.dim {
            return Err(ParseError::VariableOutOfRange {
                name: name.to_string(),
                offset: span.start,
                dim: self.scope.dim,
            });
        }
        if fiber && !self.scope.allow_fiber {
            return Err(ParseError::FiberVariableNotAllowed {
                name: name.to_string(),
                offset: span.start,
            });
        }
        Ok(Some(if fiber { NodeKind::Y(index) } else { NodeKind::X(index) }))
    }

    fn call(&mut self, name: String, span: Span) -> Result<Node, ParseError> {
        self.expect(Tok::LParen, "`(`")?;
        let arg = self.expr(0)?;
        if name == "pow" {
            self.expect(Tok::Comma, "`,` in pow(base, exponent)")?;
            let exponent_node = self.expr(0)?;
            let exponent = const_rational(&exponent_node).ok_or(ParseError::NonRationalExponent {
                offset: exponent_node.span.start,
            })?;
            let close = self.expect(Tok::RParen, "`)`")?;
            return Ok(Node {
                kind: NodeKind::Pow(Box::new(arg), exponent),
                span: Span {
                    start: span.start,
                    end: close.end,
                },
            });
        }
        let func = Func::from_name(&name).ok_or(ParseError::UnknownIdentifier {
            name: name.clone(),
            offset: span.start,
        })?;
        let close = self.expect(Tok::RParen, "`)`")?;
        Ok(Node {
            kind: NodeKind::Call(func, Box::new(arg)),
            span: Span {
                start: span.start,
                end: close.end,
            },
        })
    }
}

fn const_rational(node: &Node) -> Option<Rational> {
    match &node.kind {
        NodeKind::Const(v) => {
            if v.fract() == 0.0 && v.abs() < 1e15 {
                Rational::new(*v as i64, 1)
            } else {
                None
            }
        }
        NodeKind::Neg(a) => {
            let r = const_rational(a)?;
            Rational::new(-r.num, r.den)
        }
        NodeKind::Pow(a, r) if r.den == 1 => {
            let base = const_rational(a)?;
            let e = u32::try_from(r.num.unsigned_abs()).ok()?;
            let (n, d) = (base.num.checked_pow(e)?, base.den.checked_pow(e)?);
            if r.num >= 0 {
                Rational::new(n, d)
            } else {
                Rational::new(d, n)
            }
        }
        NodeKind::Binary(op, a, b) => {
            let (a, b) = (const_rational(a)?, const_rational(b)?);
            match op {
                BinOp::Div => Rational::new(a.num.checked_mul(b.den)?, a.den.checked_mul(b.num)?),
                BinOp::Mul => Rational::new(a.num.checked_mul(b.num)?, a.den.checked_mul(b.den)?),
                BinOp::Add | BinOp::Sub => {
                    let sign = if *op == BinOp::Add { 1 } else { -1 };
                    Rational::new(
                        a.num.checked_mul(b.den)? + sign * b.num.checked_mul(a.den)?,
                        a.den.checked_mul(b.den)?,
                    )
                }
            }
        }
        _ => None,
    }
}

/// Parse with no parameters in scope; `dim` bounds both `x` and `y` indices.
pub fn parse(text: &str, dim: usize) -> Result<Expr, ParseError> {
    Expr::parse(text, &Scope::fiber(dim))
}

impl Expr {
    pub fn parse(text: &str, scope: &Scope) -> Result<Expr, ParseError> {
        let toks = lex(text)?;
        let mut parser = Parser { toks, pos: 0, scope };
        let root = parser.expr(0)?;
        if *parser.peek() != Tok::End {
            return Err(ParseError::Syntax {
                offset: parser.span().start,
                message: "unexpected trailing input".into(),
            });
        }
        Ok(Expr {
            root,
            dim: scope.dim,
            source: text.to_string(),
        })
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// True when the expression does not mention any fiber coordinate.
    pub fn is_base_only(&self) -> bool {
        fn walk(n: &Node) -> bool {
            match &n.kind {
                NodeKind::Y(_) => false,
                NodeKind::Const(_) | NodeKind::X(_) | NodeKind::Param(_) => true,
                NodeKind::Neg(a) | NodeKind::Call(_, a) | NodeKind::Pow(a, _) => walk(a),
                NodeKind::Binary(_, a, b) => walk(a) && walk(b),
            }
        }
        walk(&self.root)
    }

    /// Fully parenthesized canonical text; reparses to the same tree.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        print_node(&self.root, &mut out);
        out
    }

    /// Evaluate in jet arithmetic. `y` may be empty for base-only
    /// expressions.
    pub fn eval_jet<T: Scalar>(&self, x: &[Jet<T>], y: &[Jet<T>], params: &Params) -> Result<Jet<T>, EvalError> {
        self.eval_jet_branches(x, y, params, &mut Vec::new())
    }

    /// As [`Expr::eval_jet`], also recording the sign of every `abs`
    /// argument in evaluation order.
    pub fn eval_jet_branches<T: Scalar>(
        &self,
        x: &[Jet<T>],
        y: &[Jet<T>],
        params: &Params,
        branches: &mut Vec<i8>,
    ) -> Result<Jet<T>, EvalError> {
        if x.len() != self.dim {
            return Err(EvalError::DimMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if !y.is_empty() && y.len() != self.dim {
            return Err(EvalError::DimMismatch {
                expected: self.dim,
                got: y.len(),
            });
        }
        let template = x.first().or(y.first()).expect("dimension is positive");
        let ctx = JetCtx {
            x,
            y,
            params,
            template,
            source: &self.source,
        };
        ctx.eval(&self.root, branches)
    }

    /// Plain floating-point evaluation, independent of the jet engine.
    pub fn eval_f64(&self, x: &[f64], y: &[f64], params: &Params) -> Result<f64, EvalError> {
        if x.len() != self.dim {
            return Err(EvalError::DimMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        eval_scalar(&self.root, x, y, params, &self.source)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

fn print_node(node: &Node, out: &mut String) {
    match &node.kind {
        NodeKind::Const(v) => out.push_str(&format!("{v:?}")),
        NodeKind::X(i) => out.push_str(&format!("x{i}")),
        NodeKind::Y(i) => out.push_str(&format!("y{i}")),
        NodeKind::Param(p) => out.push_str(p),
        NodeKind::Neg(a) => {
            out.push_str("(-");
            print_node(a, out);
            out.push(')');
        }
        NodeKind::Binary(op, a, b) => {
            out.push('(');
            print_node(a, out);
            out.push_str(match op {
                BinOp::Add => " + ",
                BinOp::Sub => " - ",
                BinOp::Mul => " * ",
                BinOp::Div => " / ",
            });
            print_node(b, out);
            out.push(')');
        }
        NodeKind::Call(func, a) => {
            out.push_str(func.name());
            out.push('(');
            print_node(a, out);
            out.push(')');
        }
        NodeKind::Pow(a, r) => {
            out.push('(');
            print_node(a, out);
            if r.den == 1 && r.num >= 0 {
                out.push_str(&format!("^{})", r.num));
            } else if r.den == 1 {
                out.push_str(&format!("^(-{}))", -r.num));
            } else if r.num < 0 {
                out.push_str(&format!("^(-{}/{}))", -r.num, r.den));
            } else {
                out.push_str(&format!("^({}/{}))", r.num, r.den));
            }
        }
    }
}

struct JetCtx<'a, T> {
    x: &'a [Jet<T>],
    y: &'a [Jet<T>],
    params: &'a Params,
    template: &'a Jet<T>,
    source: &'a str,
}

impl<'a, T: Scalar> JetCtx<'a, T> {
    fn wrap(&self, span: Span) -> impl Fn(JetError) -> EvalError + '_ {
        move |source| EvalError::Jet {
            source,
            span,
            snippet: self.source.get(span.start..span.end).unwrap_or("").to_string(),
        }
    }

    fn eval(&self, node: &Node, branches: &mut Vec<i8>) -> Result<Jet<T>, EvalError> {
        let cast = |v: f64| T::from_f64(v).expect("representable constant");
        Ok(match &node.kind {
            NodeKind::Const(v) => self.template.constant_like(cast(*v)),
            NodeKind::X(i) => self.x[*i].clone(),
            NodeKind::Y(i) => self.y.get(*i).cloned().ok_or(EvalError::MissingFiber)?,
            NodeKind::Param(p) => {
                let v = self
                    .params
                    .get(p)
                    .ok_or_else(|| EvalError::UnboundParameter(p.clone()))?;
                self.template.constant_like(cast(*v))
            }
            NodeKind::Neg(a) => self.eval(a, branches)?.neg(),
            NodeKind::Binary(op, a, b) => {
                let (a, b) = (self.eval(a, branches)?, self.eval(b, branches)?);
                match op {
                    BinOp::Add => a.add(&b),
                    BinOp::Sub => a.sub(&b),
                    BinOp::Mul => a.mul(&b),
                    BinOp::Div => a.div(&b).map_err(self.wrap(node.span))?,
                }
            }
            NodeKind::Call(func, a) => {
                let a = self.eval(a, branches)?;
                let wrap = self.wrap(node.span);
                match func {
                    Func::Sqrt => a.sqrt().map_err(wrap)?,
                    Func::Exp => a.exp(),
                    Func::Log => a.ln().map_err(wrap)?,
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Abs => {
                        let out = a.abs().map_err(wrap)?;
                        branches.push(if a.value() < T::zero() { -1 } else { 1 });
                        out
                    }
                }
            }
            NodeKind::Pow(a, r) => self
                .eval(a, branches)?
                .pow_rational(r.num, r.den)
                .map_err(self.wrap(node.span))?,
        })
    }
}

fn eval_scalar(node: &Node, x: &[f64], y: &[f64], params: &Params, source: &str) -> Result<f64, EvalError> {
    let fail = |op: &'static str, reason: &str| EvalError::Jet {
        source: JetError::Domain {
            op,
            reason: reason.to_string(),
        },
        span: node.span,
        snippet: source.get(node.span.start..node.span.end).unwrap_or("").to_string(),
    };
    let rec = |n: &Node| eval_scalar(n, x, y, params, source);
    Ok(match &node.kind {
        NodeKind::Const(v) => *v,
        NodeKind::X(i) => x[*i],
        NodeKind::Y(i) => *y.get(*i).ok_or(EvalError::MissingFiber)?,
        NodeKind::Param(p) => *params.get(p).ok_or_else(|| EvalError::UnboundParameter(p.clone()))?,
        NodeKind::Neg(a) => -rec(a)?,
        NodeKind::Binary(op, a, b) => {
            let (a, b) = (rec(a)?, rec(b)?);
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b == 0.0 {
                        return Err(fail("div", "division by zero"));
                    }
                    a / b
                }
            }
        }
        NodeKind::Call(func, a) => {
            let a = rec(a)?;
            match func {
                Func::Sqrt if a <= 0.0 => return Err(fail("sqrt", "non-positive argument")),
                Func::Sqrt => a.sqrt(),
                Func::Exp => a.exp(),
                Func::Log if a <= 0.0 => return Err(fail("log", "non-positive argument")),
                Func::Log => a.ln(),
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Abs if a == 0.0 => return Err(fail("abs", "zero argument")),
                Func::Abs => a.abs(),
            }
        }
        NodeKind::Pow(a, r) => {
            let a = rec(a)?;
            if r.den == 1 {
                if r.num < 0 && a == 0.0 {
                    return Err(fail("pow", "negative power of zero"));
                }
                a.powi(r.num as i32)
            } else if a > 0.0 {
                a.powf(r.as_f64())
            } else {
                return Err(fail("pow", "fractional power of non-positive base"));
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::seed_variables;
    use approx::assert_relative_eq;

    fn node(text: &str, dim: usize) -> Node {
        parse(text, dim).unwrap().root
    }

    #[test]
    fn difference_of_squares_tree() {
        let n = node("y0^2 - y1^2", 2);
        match n.kind {
            NodeKind::Binary(BinOp::Sub, a, b) => {
                assert!(matches!(a.kind, NodeKind::Pow(ref base, Rational { num: 2, den: 1 })
                    if matches!(base.kind, NodeKind::Y(0))));
                assert!(matches!(b.kind, NodeKind::Pow(ref base, Rational { num: 2, den: 1 })
                    if matches!(base.kind, NodeKind::Y(1))));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unary_minus_over_fractional_pow() {
        let n = node("-(2/3^(3/4))", 1);
        let NodeKind::Neg(inner) = n.kind else {
            panic!("expected negation")
        };
        let NodeKind::Binary(BinOp::Div, num, den) = inner.kind else {
            panic!("expected division")
        };
        assert!(matches!(num.kind, NodeKind::Const(v) if v == 2.0));
        assert!(matches!(den.kind, NodeKind::Pow(_, Rational { num: 3, den: 4 })));
    }

    #[test]
    fn unary_minus_binds_tighter_than_pow() {
        assert_eq!(node("-y0^2", 1), node("(-y0)^2", 1));
        assert_eq!(node("2^-1", 1), node("2^(-1)", 1));
        assert_eq!(node("y0^2^3", 1), node("y0^(2^3)", 1));
    }

    #[test]
    fn variable_out_of_range() {
        assert!(matches!(
            parse("y5", 2),
            Err(ParseError::VariableOutOfRange { offset: 0, .. })
        ));
    }

    #[test]
    fn negative_corpus() {
        for bad in [
            "(y0 + 1",
            "y0 + 1)",
            "y0 + * y1",
            "",
            "*y0",
            "y0 y1",
            "x3",
            "foo",
            "sqrt y0",
            "y0^0.5",
            "y0^x0",
            "pow(y0)",
            "exp(y0,",
            "1..2",
            "y0 $ 2",
            "sin()",
        ] {
            assert!(parse(bad, 2).is_err(), "accepted {bad:?}");
        }
        let base = Scope::base(2);
        assert!(matches!(
            Expr::parse("x0 + y1", &base),
            Err(ParseError::FiberVariableNotAllowed { .. })
        ));
    }

    #[test]
    fn syntax_error_offsets() {
        match parse("y0 + * y1", 2) {
            Err(ParseError::Syntax { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn params_and_pi() {
        let scope = Scope::fiber(1).with_params(["k"]);
        let e = Expr::parse("k*pi*y0", &scope).unwrap();
        let params: Params = [("k".to_string(), 2.0)].into();
        assert_relative_eq!(e.eval_f64(&[0.0], &[1.0], &params).unwrap(), 2.0 * std::f64::consts::PI);
        assert!(matches!(
            e.eval_f64(&[0.0], &[1.0], &Params::new()),
            Err(EvalError::UnboundParameter(_))
        ));
    }

    #[test]
    fn product_jet() {
        let e = parse("x0*y1", 2).unwrap();
        let seeds = seed_variables(&[2.0, 0.0, 0.0, 3.0], &[0, 3], 1).unwrap();
        let j = e.eval_jet(&seeds[..2], &seeds[2..], &Params::new()).unwrap();
        assert_eq!(j.value(), 6.0);
        assert_eq!(j.gradient(0).unwrap(), 3.0);
        assert_eq!(j.gradient(1).unwrap(), 2.0);
    }

    #[test]
    fn log_domain_error_names_node() {
        let e = parse("1 + log(y0)", 1).unwrap();
        let seeds = seed_variables(&[0.0, -1.0], &[1], 1).unwrap();
        match e.eval_jet(&seeds[..1], &seeds[1..], &Params::new()) {
            Err(EvalError::Jet { snippet, span, .. }) => {
                assert_eq!(snippet, "log(y0)");
                assert_eq!(span.start, 4);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn abs_branches_recorded() {
        let e = parse("abs(y0)*y1 + abs(y1)", 2).unwrap();
        let seeds = seed_variables(&[0.0, 0.0, -1.0, 2.0], &[2, 3], 1).unwrap();
        let mut branches = Vec::new();
        e.eval_jet_branches(&seeds[..2], &seeds[2..], &Params::new(), &mut branches)
            .unwrap();
        assert_eq!(branches, vec![-1, 1]);
    }

    #[test]
    fn canonical_reparses() {
        for text in [
            "-(2/3^(3/4))*y0",
            "pow(y0, -1/2) + 1e-7",
            "x0 - (y1 - 2)",
            "sqrt(abs(y0))^(3/4)",
        ] {
            let e = parse(text, 2).unwrap();
            let again = parse(&e.canonical(), 2).unwrap();
            assert_eq!(e, again, "{text} -> {}", e.canonical());
        }
    }
}
