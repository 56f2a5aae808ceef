//! A small expression language in the variables `x` and `t`.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | 'x' | 't' | func '(' expr ')' | '(' expr ')'
//! func    := 'ln' | 'exp' | 'abs' | 'sign' | 'sqrt'
//! number  := digits ['.' digits] [('e' | 'E') ['+' | '-'] digits]
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-t^2`
//! is `-(t^2)` and `2^3^2` is `2^(3^2)`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kernel::OpenInterval;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: expected {expected}")]
    Syntax { offset: usize, expected: String },

    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { offset: usize, name: String },

    #[error("`{subexpr}` is undefined: {reason}")]
    Domain { subexpr: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Ln,
    Exp,
    Abs,
    Sign,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "ln" => Func::Ln,
            "exp" => Func::Exp,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn name(&self) -> &'static str {
        match self {
            Func::Ln => "ln",
            Func::Exp => "exp",
            Func::Abs => "abs",
            Func::Sign => "sign",
            Func::Sqrt => "sqrt",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    /// Whether the expression mentions the given variable.
    pub fn uses(&self, var: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(e) | Expr::Call(_, e) => e.uses(var),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.uses(var) || b.uses(var)
            }
        }
    }

    pub fn eval(&self, x: f64, t: f64) -> Result<f64, ExprError> {
        eval_expr(self, x, t)
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(..) => 3,
            Expr::Pow(..) => 4,
            Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => 5,
        }
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    if e.precedence() < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Var(Var::T) => f.write_str("t"),
            Expr::Neg(e) => {
                f.write_str("-")?;
                write_operand(f, e, 3)
            }
            Expr::Add(a, b) => {
                write_operand(f, a, 1)?;
                f.write_str(" + ")?;
                write_operand(f, b, 2)
            }
            Expr::Sub(a, b) => {
                write_operand(f, a, 1)?;
                f.write_str(" - ")?;
                write_operand(f, b, 2)
            }
            Expr::Mul(a, b) => {
                write_operand(f, a, 2)?;
                f.write_str("*")?;
                write_operand(f, b, 3)
            }
            Expr::Div(a, b) => {
                write_operand(f, a, 2)?;
                f.write_str("/")?;
                write_operand(f, b, 3)
            }
            Expr::Pow(a, b) => {
                // The base must be atomic: `-t` or `t^2` as a base needs parentheses.
                write_operand(f, a, 5)?;
                f.write_str("^")?;
                write_operand(f, b, 3)
            }
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
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
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| ExprError::Syntax {
                    offset: start,
                    expected: "a number".into(),
                })?;
                out.push((start, Tok::Num(v)));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(src[start..i].to_string())));
                continue;
            }
            _ => {
                return Err(ExprError::Syntax {
                    offset: start,
                    expected: "an operator, number, identifier or parenthesis".into(),
                })
            }
        };
        i += 1;
        out.push((start, tok));
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &str) -> Result<T, ExprError> {
        Err(ExprError::Syntax {
            offset: self.offset(),
            expected: format!("{expected}, found {}", self.peek().describe()),
        })
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                match name.as_str() {
                    "x" => Ok(Expr::Var(Var::X)),
                    "t" => Ok(Expr::Var(Var::T)),
                    _ => match Func::from_name(&name) {
                        Some(func) => {
                            if *self.peek() != Tok::LParen {
                                return self.fail("`(` after function name");
                            }
                            self.bump();
                            let arg = self.expr()?;
                            self.expect_rparen()?;
                            Ok(Expr::Call(func, Box::new(arg)))
                        }
                        None => Err(ExprError::UnknownIdentifier { offset, name }),
                    },
                }
            }
            _ => self.fail("a number, variable, function or `(`"),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        if *self.peek() == Tok::RParen {
            self.bump();
            Ok(())
        } else {
            self.fail("`)`")
        }
    }
}

pub fn parse(source: &str) -> Result<Expr, ExprError> {
    let toks = tokenize(source)?;
    let mut p = Parser { toks, pos: 0 };
    if *p.peek() == Tok::End {
        return p.fail("an expression");
    }
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.fail("an operator or end of input");
    }
    Ok(e)
}

fn domain(e: &Expr, reason: &str) -> ExprError {
    ExprError::Domain {
        subexpr: e.to_string(),
        reason: reason.to_string(),
    }
}

pub fn eval_expr(e: &Expr, x: f64, t: f64) -> Result<f64, ExprError> {
    let v = match e {
        Expr::Num(v) => *v,
        Expr::Var(Var::X) => x,
        Expr::Var(Var::T) => t,
        Expr::Neg(a) => -eval_expr(a, x, t)?,
        Expr::Add(a, b) => eval_expr(a, x, t)? + eval_expr(b, x, t)?,
        Expr::Sub(a, b) => eval_expr(a, x, t)? - eval_expr(b, x, t)?,
        Expr::Mul(a, b) => eval_expr(a, x, t)? * eval_expr(b, x, t)?,
        Expr::Div(a, b) => {
            let num = eval_expr(a, x, t)?;
            let den = eval_expr(b, x, t)?;
            if den == 0.0 {
                return Err(domain(e, "division by zero"));
            }
            num / den
        }
        Expr::Pow(a, b) => {
            let base = eval_expr(a, x, t)?;
            let exp = eval_expr(b, x, t)?;
            if base == 0.0 && exp < 0.0 {
                return Err(domain(e, "zero raised to a negative power"));
            }
            if base < 0.0 && exp.fract() != 0.0 {
                return Err(domain(e, "negative base with non-integer exponent"));
            }
            if exp.fract() == 0.0 && exp.abs() <= i32::MAX as f64 {
                base.powi(exp as i32)
            } else {
                base.powf(exp)
            }
        }
        Expr::Call(func, a) => {
            let arg = eval_expr(a, x, t)?;
            match func {
                Func::Ln => {
                    if arg <= 0.0 {
                        return Err(domain(e, "logarithm of a nonpositive number"));
                    }
                    arg.ln()
                }
                Func::Exp => arg.exp(),
                Func::Abs => arg.abs(),
                Func::Sign => {
                    if arg > 0.0 {
                        1.0
                    } else if arg < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                }
                Func::Sqrt => {
                    if arg < 0.0 {
                        return Err(domain(e, "square root of a negative number"));
                    }
                    arg.sqrt()
                }
            }
        }
    };
    if v.is_nan() {
        return Err(domain(e, "result is not a number"));
    }
    Ok(v)
}

const MONOTONE_SEED: u64 = 0x5eed_0f_7e57;

/// Checks strict increase in `t` on an equispaced (in the interval's unit
/// parametrisation) grid and on 100 seeded random pairs.
pub fn validate_monotone(e: &Expr, theta: OpenInterval, grid: usize) -> Result<bool, ExprError> {
    if grid < 3 {
        return Err(ExprError::Syntax {
            offset: 0,
            expected: "a grid of at least 3 points".into(),
        });
    }
    let f = |t: f64| eval_expr(e, 0.0, t);
    let pts = theta.probe_grid(grid);
    let mut prev: Option<f64> = None;
    for &t in &pts {
        let v = f(t)?;
        if let Some(p) = prev {
            if v <= p {
                return Ok(false);
            }
        }
        prev = Some(v);
    }
    // Random pairs stay within the span of the grid, where f64 still resolves the values.
    let u_lo = 1.0 / (grid + 1) as f64;
    let u_hi = 1.0 - u_lo;
    let mut rng = ChaCha8Rng::seed_from_u64(MONOTONE_SEED);
    for _ in 0..100 {
        let a = theta.from_unit(rng.random_range(u_lo..u_hi));
        let b = theta.from_unit(rng.random_range(u_lo..u_hi));
        if !(theta.contains(a) && theta.contains(b)) || a == b {
            continue;
        }
        let (s, u) = if a < b { (a, b) } else { (b, a) };
        if f(s)? >= f(u)? {
            return Ok(false);
        }
    }
    Ok(true)
}
