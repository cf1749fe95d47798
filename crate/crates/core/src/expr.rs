//! Tiny expression language for map branches: `2*x + 0.1*sin(2*pi*x)`.
//!
//! Supports numbers, `x`, `pi`, `+ - * /`, integer powers `^`, and the
//! functions `sin`, `cos`, `exp`. Expressions differentiate symbolically,
//! which gives exact derivatives up to the fourth order — the response
//! coefficient needs h0'' and the convergence checks need one more order
//! of smoothness, so nothing beyond order four is ever requested.

use crate::error::{Error, Result};
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var,
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, i32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0, src: src.to_string() };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(p.err_here("trailing input after complete expression"));
        }
        Ok(e.simplify())
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var => x,
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Neg(a) => -a.eval(x),
            Expr::Pow(a, n) => a.eval(x).powi(*n),
            Expr::Sin(a) => a.eval(x).sin(),
            Expr::Cos(a) => a.eval(x).cos(),
            Expr::Exp(a) => a.eval(x).exp(),
        }
    }

    /// Symbolic derivative, simplified.
    pub fn diff(&self) -> Expr {
        let d = match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var => Expr::Const(1.0),
            Expr::Add(a, b) => Expr::Add(Box::new(a.diff()), Box::new(b.diff())),
            Expr::Sub(a, b) => Expr::Sub(Box::new(a.diff()), Box::new(b.diff())),
            Expr::Mul(a, b) => Expr::Add(
                Box::new(Expr::Mul(Box::new(a.diff()), b.clone())),
                Box::new(Expr::Mul(a.clone(), Box::new(b.diff()))),
            ),
            Expr::Div(a, b) => Expr::Div(
                Box::new(Expr::Sub(
                    Box::new(Expr::Mul(Box::new(a.diff()), b.clone())),
                    Box::new(Expr::Mul(a.clone(), Box::new(b.diff()))),
                )),
                Box::new(Expr::Pow(b.clone(), 2)),
            ),
            Expr::Neg(a) => Expr::Neg(Box::new(a.diff())),
            Expr::Pow(a, n) => Expr::Mul(
                Box::new(Expr::Mul(
                    Box::new(Expr::Const(*n as f64)),
                    Box::new(Expr::Pow(a.clone(), n - 1)),
                )),
                Box::new(a.diff()),
            ),
            Expr::Sin(a) => Expr::Mul(Box::new(Expr::Cos(a.clone())), Box::new(a.diff())),
            Expr::Cos(a) => Expr::Neg(Box::new(Expr::Mul(
                Box::new(Expr::Sin(a.clone())),
                Box::new(a.diff()),
            ))),
            Expr::Exp(a) => Expr::Mul(Box::new(Expr::Exp(a.clone())), Box::new(a.diff())),
        };
        d.simplify()
    }

    /// n-th symbolic derivative (n <= 4 in practice; cheap either way).
    pub fn nth_derivative(&self, n: usize) -> Expr {
        let mut e = self.clone();
        for _ in 0..n {
            e = e.diff();
        }
        e
    }

    /// Bottom-up constant folding and identity elimination.
    pub fn simplify(&self) -> Expr {
        match self {
            Expr::Const(_) | Expr::Var => self.clone(),
            Expr::Add(a, b) => match (a.simplify(), b.simplify()) {
                (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
                (Expr::Const(c), e) | (e, Expr::Const(c)) if c == 0.0 => e,
                (a, b) => Expr::Add(Box::new(a), Box::new(b)),
            },
            Expr::Sub(a, b) => match (a.simplify(), b.simplify()) {
                (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
                (e, Expr::Const(c)) if c == 0.0 => e,
                (Expr::Const(c), e) if c == 0.0 => Expr::Neg(Box::new(e)).simplify(),
                (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
            },
            Expr::Mul(a, b) => match (a.simplify(), b.simplify()) {
                (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
                (Expr::Const(c), _) | (_, Expr::Const(c)) if c == 0.0 => Expr::Const(0.0),
                (Expr::Const(c), e) | (e, Expr::Const(c)) if c == 1.0 => e,
                (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
            },
            Expr::Div(a, b) => match (a.simplify(), b.simplify()) {
                (Expr::Const(x), Expr::Const(y)) if y != 0.0 => Expr::Const(x / y),
                (e, Expr::Const(c)) if c == 1.0 => e,
                (Expr::Const(c), _) if c == 0.0 => Expr::Const(0.0),
                (a, b) => Expr::Div(Box::new(a), Box::new(b)),
            },
            Expr::Neg(a) => match a.simplify() {
                Expr::Const(c) => Expr::Const(-c),
                Expr::Neg(inner) => *inner,
                e => Expr::Neg(Box::new(e)),
            },
            Expr::Pow(a, n) => match (a.simplify(), *n) {
                (_, 0) => Expr::Const(1.0),
                (e, 1) => e,
                (Expr::Const(c), n) => Expr::Const(c.powi(n)),
                (e, n) => Expr::Pow(Box::new(e), n),
            },
            Expr::Sin(a) => match a.simplify() {
                Expr::Const(c) => Expr::Const(c.sin()),
                e => Expr::Sin(Box::new(e)),
            },
            Expr::Cos(a) => match a.simplify() {
                Expr::Const(c) => Expr::Const(c.cos()),
                e => Expr::Cos(Box::new(e)),
            },
            Expr::Exp(a) => match a.simplify() {
                Expr::Const(c) => Expr::Const(c.exp()),
                e => Expr::Exp(Box::new(e)),
            },
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var => write!(f, "x"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Pow(a, n) => write!(f, "{a}^{n}"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<(Token, usize)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' => i += 1,
            '+' => { out.push((Token::Plus, i)); i += 1; }
            '-' => { out.push((Token::Minus, i)); i += 1; }
            '*' => { out.push((Token::Star, i)); i += 1; }
            '/' => { out.push((Token::Slash, i)); i += 1; }
            '^' => { out.push((Token::Caret, i)); i += 1; }
            '(' => { out.push((Token::LParen, i)); i += 1; }
            ')' => { out.push((Token::RParen, i)); i += 1; }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.') {
                    i += 1;
                }
                // optional exponent part
                if i < bytes.len() && matches!(bytes[i] as char, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && matches!(bytes[j] as char, '+' | '-') {
                        j += 1;
                    }
                    if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| {
                    Error::Expr(format!("invalid number '{text}' at position {start}"))
                })?;
                out.push((Token::Num(v), start));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && matches!(bytes[i] as char, 'a'..='z' | 'A'..='Z' | '0'..='9' | '_')
                {
                    i += 1;
                }
                out.push((Token::Ident(src[start..i].to_string()), start));
            }
            _ => {
                return Err(Error::Expr(format!(
                    "unexpected character '{c}' at position {i}"
                )))
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    src: String,
}

impl Parser {
    fn err_here(&self, msg: &str) -> Error {
        let at = self
            .tokens
            .get(self.pos)
            .map(|(_, p)| format!(" at position {p}"))
            .unwrap_or_else(|| " at end of input".to_string());
        Error::Expr(format!("{msg}{at} in '{}'", self.src))
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                }
                Some(Token::Slash) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if matches!(self.peek(), Some(Token::Minus)) {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Token::Caret)) {
            self.pos += 1;
            // Exponent must fold to an integer constant: map branches only
            // ever need integer powers, and fractional powers would break
            // the symbolic derivative chain at the circle wrap.
            let neg = if matches!(self.peek(), Some(Token::Minus)) {
                self.pos += 1;
                true
            } else {
                false
            };
            match self.bump() {
                Some(Token::Num(v)) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => {
                    let n = v as i32;
                    Ok(Expr::Pow(Box::new(base), if neg { -n } else { n }))
                }
                _ => {
                    self.pos = self.pos.saturating_sub(1);
                    Err(self.err_here("exponent must be an integer literal"))
                }
            }
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.bump() {
            Some(Token::Num(v)) => Ok(Expr::Const(v)),
            Some(Token::Ident(name)) => match name.as_str() {
                "x" => Ok(Expr::Var),
                "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                "sin" | "cos" | "exp" => {
                    if !matches!(self.peek(), Some(Token::LParen)) {
                        return Err(self.err_here(&format!("'{name}' must be followed by '('")));
                    }
                    self.pos += 1;
                    let arg = self.expr()?;
                    if !matches!(self.peek(), Some(Token::RParen)) {
                        return Err(self.err_here("missing ')'"));
                    }
                    self.pos += 1;
                    Ok(match name.as_str() {
                        "sin" => Expr::Sin(Box::new(arg)),
                        "cos" => Expr::Cos(Box::new(arg)),
                        _ => Expr::Exp(Box::new(arg)),
                    })
                }
                other => {
                    self.pos -= 1;
                    Err(self.err_here(&format!(
                        "unknown identifier '{other}' (allowed: x, pi, sin, cos, exp)"
                    )))
                }
            },
            Some(Token::LParen) => {
                let e = self.expr()?;
                if !matches!(self.peek(), Some(Token::RParen)) {
                    return Err(self.err_here("missing ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            _ => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.err_here("expected a number, 'x', 'pi', function call, or '('"))
            }
        }
    }
}
