//! Arithmetic expressions over `t, x1..xd`.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?              right associative
//! primary := number | 't' | 'x1' .. 'xd' | func '(' args ')' | '(' expr ')'
//! func    := exp | log | sqrt | abs | sign | sin | cos | tanh   one argument
//!          | min | max                                          two arguments
//! ```
//!
//! `x` is accepted as a synonym of `x1` when `d = 1`. An integer literal
//! exponent (`x1^2`, `x1^(-3)`) is evaluated by repeated multiplication.
//! [`fmt::Display`] prints a fully parenthesized form that parses back to
//! the same tree.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::error::{DomainError, Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Abs,
    Sign,
    Sin,
    Cos,
    Tanh,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sign => "sign",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tanh => "tanh",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }
}

/// Differentiation variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    Time,
    Space(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Time,
    /// Zero-based spatial coordinate; printed as `x{i+1}`.
    X(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    PowI(Box<Expr>, i32),
    Call(Func, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
}

// Constructors with light folding, used by builders and by `derivative`.
impl Expr {
    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn x(i: usize) -> Expr {
        Expr::X(i)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x + y),
            (Some(0.0), _) => b,
            (_, Some(0.0)) => a,
            _ => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x - y),
            (_, Some(0.0)) => a,
            (Some(0.0), _) => Expr::neg(b),
            _ => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        if a.is_zero() || b.is_zero() {
            return Expr::Const(0.0);
        }
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x * y),
            _ if a.is_one() => b,
            _ if b.is_one() => a,
            _ => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        if a.is_zero() {
            return Expr::Const(0.0);
        }
        if b.is_one() {
            return a;
        }
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) if y != 0.0 => Expr::Const(x / y),
            _ => Expr::Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Const(v) => Expr::Const(-v),
            Expr::Neg(inner) => *inner,
            other => Expr::Neg(Box::new(other)),
        }
    }

    pub fn powi(a: Expr, n: i32) -> Expr {
        match n {
            0 => Expr::Const(1.0),
            1 => a,
            _ => match a.as_const() {
                Some(v) => Expr::Const(math::powi(v, n)),
                None => Expr::PowI(Box::new(a), n),
            },
        }
    }

    pub fn pow(a: Expr, b: Expr) -> Expr {
        match b.as_const() {
            Some(v) if v == (v as i32) as f64 && v.abs() <= 64.0 => Expr::powi(a, v as i32),
            _ => Expr::Pow(Box::new(a), Box::new(b)),
        }
    }

    pub fn call(f: Func, a: Expr) -> Expr {
        Expr::Call(f, Box::new(a))
    }

    pub fn min(a: Expr, b: Expr) -> Expr {
        Expr::Min(Box::new(a), Box::new(b))
    }

    pub fn max(a: Expr, b: Expr) -> Expr {
        Expr::Max(Box::new(a), Box::new(b))
    }

    /// `x1^2 + ... + xd^2`
    pub fn norm_squared(d: usize) -> Expr {
        (0..d)
            .map(|i| Expr::powi(Expr::X(i), 2))
            .reduce(Expr::add)
            .unwrap_or(Expr::Const(0.0))
    }

    /// Sum of expressions, folded left to right.
    pub fn sum(terms: impl IntoIterator<Item = Expr>) -> Expr {
        terms.into_iter().fold(Expr::Const(0.0), Expr::add)
    }
}

impl Expr {
    /// Evaluates at `(t, x)`. `x` may be longer than the highest referenced
    /// index; a shorter `x` panics.
    pub fn eval(&self, t: f64, x: &[f64]) -> core::result::Result<f64, DomainError> {
        Ok(match self {
            Expr::Const(v) => *v,
            Expr::Time => t,
            Expr::X(i) => x[*i],
            Expr::Neg(a) => -a.eval(t, x)?,
            Expr::Add(a, b) => a.eval(t, x)? + b.eval(t, x)?,
            Expr::Sub(a, b) => a.eval(t, x)? - b.eval(t, x)?,
            Expr::Mul(a, b) => a.eval(t, x)? * b.eval(t, x)?,
            Expr::Div(a, b) => {
                let num = a.eval(t, x)?;
                let den = b.eval(t, x)?;
                if den == 0.0 {
                    return Err(DomainError::DivisionByZero);
                }
                num / den
            }
            Expr::PowI(a, n) => {
                let base = a.eval(t, x)?;
                if base == 0.0 && *n < 0 {
                    return Err(DomainError::DivisionByZero);
                }
                math::powi(base, *n)
            }
            Expr::Pow(a, b) => {
                let base = a.eval(t, x)?;
                let e = b.eval(t, x)?;
                if base < 0.0 && e != libm::trunc(e) {
                    return Err(DomainError::PowOfNegative);
                }
                if base == 0.0 && e < 0.0 {
                    return Err(DomainError::DivisionByZero);
                }
                math::powf(base, e)
            }
            Expr::Call(f, a) => {
                let v = a.eval(t, x)?;
                match f {
                    Func::Exp => math::exp(v),
                    Func::Log => {
                        if v <= 0.0 {
                            return Err(DomainError::LogOfNonPositive);
                        }
                        math::ln(v)
                    }
                    Func::Sqrt => {
                        if v < 0.0 {
                            return Err(DomainError::SqrtOfNegative);
                        }
                        math::sqrt(v)
                    }
                    Func::Abs => v.abs(),
                    Func::Sign => {
                        if v > 0.0 {
                            1.0
                        } else if v < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }
                    Func::Sin => math::sin(v),
                    Func::Cos => math::cos(v),
                    Func::Tanh => math::tanh(v),
                }
            }
            Expr::Min(a, b) => {
                let (p, q) = (a.eval(t, x)?, b.eval(t, x)?);
                if q < p {
                    q
                } else {
                    p
                }
            }
            Expr::Max(a, b) => {
                let (p, q) = (a.eval(t, x)?, b.eval(t, x)?);
                if q > p {
                    q
                } else {
                    p
                }
            }
        })
    }

    /// Largest zero-based coordinate index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        self.visit(&mut |e| {
            if let Expr::X(i) = e {
                best = Some(best.map_or(*i, |b| b.max(*i)));
            }
        });
        best
    }

    pub fn depends_on_time(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e, Expr::Time));
        found
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Const(_) | Expr::Time | Expr::X(_) => {}
            Expr::Neg(a) | Expr::PowI(a, _) | Expr::Call(_, a) => a.visit(f),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b)
            | Expr::Min(a, b)
            | Expr::Max(a, b) => {
                a.visit(f);
                b.visit(f);
            }
        }
    }

    /// Symbolic partial derivative. `abs`, `sign`, `min` and `max` use the
    /// symmetric subgradient at their kinks (`sign(0) = 0`, ties split 1/2).
    pub fn derivative(&self, v: Var) -> Expr {
        use Expr as E;
        match self {
            E::Const(_) => E::Const(0.0),
            E::Time => E::Const(if v == Var::Time { 1.0 } else { 0.0 }),
            E::X(i) => E::Const(if v == Var::Space(*i) { 1.0 } else { 0.0 }),
            E::Neg(a) => E::neg(a.derivative(v)),
            E::Add(a, b) => E::add(a.derivative(v), b.derivative(v)),
            E::Sub(a, b) => E::sub(a.derivative(v), b.derivative(v)),
            E::Mul(a, b) => E::add(
                E::mul(a.derivative(v), (**b).clone()),
                E::mul((**a).clone(), b.derivative(v)),
            ),
            E::Div(a, b) => {
                let da = a.derivative(v);
                let db = b.derivative(v);
                E::sub(
                    E::div(da, (**b).clone()),
                    E::div(E::mul((**a).clone(), db), E::powi((**b).clone(), 2)),
                )
            }
            E::PowI(a, n) => E::mul(
                E::mul(E::Const(*n as f64), E::powi((**a).clone(), n - 1)),
                a.derivative(v),
            ),
            E::Pow(a, b) => {
                let db = b.derivative(v);
                if db.is_zero() {
                    E::mul(
                        E::mul(
                            (**b).clone(),
                            E::pow((**a).clone(), E::sub((**b).clone(), E::Const(1.0))),
                        ),
                        a.derivative(v),
                    )
                } else {
                    // a^b (b' ln a + b a' / a)
                    E::mul(
                        self.clone(),
                        E::add(
                            E::mul(db, E::call(Func::Log, (**a).clone())),
                            E::div(E::mul((**b).clone(), a.derivative(v)), (**a).clone()),
                        ),
                    )
                }
            }
            E::Call(f, a) => {
                let da = a.derivative(v);
                if da.is_zero() {
                    return E::Const(0.0);
                }
                let inner = (**a).clone();
                let outer = match f {
                    Func::Exp => self.clone(),
                    Func::Log => E::div(E::Const(1.0), inner),
                    Func::Sqrt => E::div(E::Const(0.5), self.clone()),
                    Func::Abs => E::call(Func::Sign, inner),
                    Func::Sign => E::Const(0.0),
                    Func::Sin => E::call(Func::Cos, inner),
                    Func::Cos => E::neg(E::call(Func::Sin, inner)),
                    Func::Tanh => E::sub(E::Const(1.0), E::powi(self.clone(), 2)),
                };
                E::mul(outer, da)
            }
            E::Min(a, b) | E::Max(a, b) => {
                // min(a, b)' = a' H(b - a) + b' H(a - b),  H(z) = (1 + sign z) / 2
                let (first, second) = if matches!(self, E::Min(..)) {
                    (
                        E::sub((**b).clone(), (**a).clone()),
                        E::sub((**a).clone(), (**b).clone()),
                    )
                } else {
                    (
                        E::sub((**a).clone(), (**b).clone()),
                        E::sub((**b).clone(), (**a).clone()),
                    )
                };
                let heaviside =
                    |z: Expr| E::mul(E::Const(0.5), E::add(E::Const(1.0), E::call(Func::Sign, z)));
                E::add(
                    E::mul(a.derivative(v), heaviside(first)),
                    E::mul(b.derivative(v), heaviside(second)),
                )
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(v) => {
                if v.is_sign_negative() {
                    write!(f, "(-{})", -v)
                } else {
                    write!(f, "{}", v)
                }
            }
            Expr::Time => f.write_str("t"),
            Expr::X(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{})", a),
            Expr::Add(a, b) => write!(f, "({} + {})", a, b),
            Expr::Sub(a, b) => write!(f, "({} - {})", a, b),
            Expr::Mul(a, b) => write!(f, "({} * {})", a, b),
            Expr::Div(a, b) => write!(f, "({} / {})", a, b),
            Expr::Pow(a, b) => write!(f, "({} ^ {})", a, b),
            Expr::PowI(a, n) => {
                if *n < 0 {
                    write!(f, "({} ^ (-{}))", a, -(*n as i64))
                } else {
                    write!(f, "({} ^ {})", a, n)
                }
            }
            Expr::Call(func, a) => write!(f, "{}({})", func.name(), a),
            Expr::Min(a, b) => write!(f, "min({}, {})", a, b),
            Expr::Max(a, b) => write!(f, "max({}, {})", a, b),
        }
    }
}

/// Parses `src` as an expression over `t, x1..xd`.
pub fn parse(src: &str, d: usize) -> Result<Expr> {
    let mut p = Parser {
        src,
        bytes: src.as_bytes(),
        pos: 0,
        d,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.bytes.len() {
        let c = p.bytes[p.pos] as char;
        return Err(p.syntax(p.pos, format!("unexpected `{}`", c)));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    d: usize,
}

impl Parser<'_> {
    fn syntax(&self, pos: usize, msg: String) -> Error {
        Error::Syntax { pos, msg }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            let inner = self.unary()?;
            return Ok(match inner {
                Expr::Const(v) => Expr::Const(-v),
                other => Expr::Neg(Box::new(other)),
            });
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.eat(b'^') {
            let exponent = self.unary()?;
            return Ok(match exponent {
                Expr::Const(v) if v == (v as i32) as f64 && v.abs() <= 64.0 => {
                    Expr::PowI(Box::new(base), v as i32)
                }
                other => Expr::Pow(Box::new(base), Box::new(other)),
            });
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        let start = match self.peek() {
            Some(_) => self.pos,
            None => return Err(self.syntax(self.pos, "unexpected end of input".to_string())),
        };
        let c = self.bytes[start];
        if c == b'(' {
            self.pos += 1;
            let e = self.expr()?;
            if !self.eat(b')') {
                return Err(self.syntax(start, "unclosed parenthesis".to_string()));
            }
            return Ok(e);
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number(start);
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let mut end = start;
            while end < self.bytes.len()
                && (self.bytes[end].is_ascii_alphanumeric() || self.bytes[end] == b'_')
            {
                end += 1;
            }
            self.pos = end;
            let name = &self.src[start..end];
            return self.identifier(name, start);
        }
        Err(self.syntax(start, format!("unexpected `{}`", c as char)))
    }

    fn number(&mut self, start: usize) -> Result<Expr> {
        let b = self.bytes;
        let mut end = start;
        while end < b.len() && (b[end].is_ascii_digit() || b[end] == b'.') {
            end += 1;
        }
        if end < b.len() && (b[end] == b'e' || b[end] == b'E') {
            let mut k = end + 1;
            if k < b.len() && (b[k] == b'+' || b[k] == b'-') {
                k += 1;
            }
            if k < b.len() && b[k].is_ascii_digit() {
                while k < b.len() && b[k].is_ascii_digit() {
                    k += 1;
                }
                end = k;
            }
        }
        let text = &self.src[start..end];
        let v: f64 = text
            .parse()
            .map_err(|_| self.syntax(start, format!("malformed number `{}`", text)))?;
        self.pos = end;
        Ok(Expr::Const(v))
    }

    fn identifier(&mut self, name: &str, start: usize) -> Result<Expr> {
        if name == "t" {
            return Ok(Expr::Time);
        }
        if name == "x" && self.d == 1 {
            return Ok(Expr::X(0));
        }
        if let Some(digits) = name.strip_prefix('x') {
            if !digits.is_empty() && digits.bytes().all(|c| c.is_ascii_digit()) {
                let index: usize = digits.parse().unwrap_or(usize::MAX);
                if index == 0 || index > self.d {
                    return Err(Error::VariableOutOfRange {
                        index,
                        dim: self.d,
                        pos: start,
                    });
                }
                return Ok(Expr::X(index - 1));
            }
        }
        let binary = matches!(name, "min" | "max");
        let unary = Func::from_name(name);
        if unary.is_none() && !binary {
            return Err(Error::UnknownIdentifier {
                name: name.to_string(),
                pos: start,
            });
        }
        let open = self.pos;
        if !self.eat(b'(') {
            return Err(self.syntax(self.pos, format!("expected `(` after `{}`", name)));
        }
        let mut args: Vec<Expr> = Vec::new();
        args.push(self.expr()?);
        while self.eat(b',') {
            args.push(self.expr()?);
        }
        if !self.eat(b')') {
            return Err(self.syntax(open, "unclosed parenthesis".to_string()));
        }
        let want = if binary { 2 } else { 1 };
        if args.len() != want {
            return Err(self.syntax(
                start,
                format!("`{}` takes {} argument(s), got {}", name, want, args.len()),
            ));
        }
        let mut it = args.into_iter();
        let a = it.next().unwrap();
        Ok(match (name, unary) {
            ("min", _) => Expr::Min(Box::new(a), Box::new(it.next().unwrap())),
            ("max", _) => Expr::Max(Box::new(a), Box::new(it.next().unwrap())),
            (_, Some(f)) => Expr::Call(f, Box::new(a)),
            _ => unreachable!(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn ev(src: &str, d: usize, t: f64, x: &[f64]) -> f64 {
        parse(src, d).unwrap().eval(t, x).unwrap()
    }

    #[test]
    fn arithmetic_examples() {
        assert_eq!(ev("x1^2 + 1", 1, 0.0, &[2.0]), 5.0);
        assert_eq!(ev("exp(-t)*x1", 1, 0.0, &[3.0]), 3.0);
        assert_eq!(ev("2^3^2", 1, 0.0, &[0.0]), 512.0);
        assert_eq!(ev("-x1^2", 1, 0.0, &[3.0]), -9.0);
        assert_eq!(ev("min(x1, x2) + max(x1, x2)", 2, 0.0, &[1.0, 4.0]), 5.0);
        assert_eq!(ev("1.5e1 / 3", 1, 0.0, &[0.0]), 5.0);
        assert_eq!(ev("x^2", 1, 0.0, &[3.0]), 9.0);
    }

    #[test]
    fn unbalanced_parenthesis_reports_its_position() {
        match parse("x1 + (x2", 2) {
            Err(Error::Syntax { pos, .. }) => assert_eq!(pos, 5),
            other => panic!("{:?}", other),
        }
    }

    #[test]
    fn bad_identifiers() {
        assert!(matches!(
            parse("y + 1", 1),
            Err(Error::UnknownIdentifier { pos: 0, .. })
        ));
        assert!(matches!(
            parse("x3", 2),
            Err(Error::VariableOutOfRange {
                index: 3,
                dim: 2,
                ..
            })
        ));
        assert!(matches!(
            parse("x0", 2),
            Err(Error::VariableOutOfRange { .. })
        ));
        assert!(matches!(
            parse("x", 2),
            Err(Error::UnknownIdentifier { .. })
        ));
        assert!(matches!(parse("exp(1, 2)", 1), Err(Error::Syntax { .. })));
        assert!(matches!(parse("1 +", 1), Err(Error::Syntax { .. })));
        assert!(matches!(parse("1 2", 1), Err(Error::Syntax { pos: 2, .. })));
    }

    #[test]
    fn domain_errors() {
        let d = |s: &str, x: f64| parse(s, 1).unwrap().eval(0.0, &[x]).unwrap_err();
        assert_eq!(d("log(x1)", -1.0), DomainError::LogOfNonPositive);
        assert_eq!(d("sqrt(x1)", -1.0), DomainError::SqrtOfNegative);
        assert_eq!(d("1 / x1", 0.0), DomainError::DivisionByZero);
        assert_eq!(d("x1 ^ 0.5", -2.0), DomainError::PowOfNegative);
        assert_eq!(d("x1 ^ (-1)", 0.0), DomainError::DivisionByZero);
    }

    #[test]
    fn printing_reparses_to_same_tree() {
        for src in [
            "x1^2 + 1",
            "-(x1 - 3) * exp(-t) / (1 + x2^2)",
            "min(abs(x1), 2.5) - max(sin(x2), cos(t))",
            "tanh(5*x1) ^ (-2) + sqrt(1 + x1^2) ^ 1.5",
            "-0.000001 * x1 + 1e300",
        ] {
            let e = parse(src, 2).unwrap();
            let printed = e.to_string();
            assert_eq!(parse(&printed, 2).unwrap(), e, "{printed}");
        }
    }

    #[test]
    fn derivative_of_polynomial_and_functions() {
        let e = parse("x1^3 * x2 + exp(2 * x1) - tanh(x2)", 2).unwrap();
        let dx1 = e.derivative(Var::Space(0));
        let dx2 = e.derivative(Var::Space(1));
        let (a, b) = (0.7, -0.3);
        let want1 = 3.0 * a * a * b + 2.0 * math::exp(2.0 * a);
        let th = math::tanh(b);
        let want2 = a * a * a - (1.0 - th * th);
        assert!((dx1.eval(0.0, &[a, b]).unwrap() - want1).abs() < 1e-14);
        assert!((dx2.eval(0.0, &[a, b]).unwrap() - want2).abs() < 1e-14);
        let dt = parse("exp(-t) * x1", 1).unwrap().derivative(Var::Time);
        assert!((dt.eval(0.5, &[2.0]).unwrap() + 2.0 * math::exp(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn derivative_at_kinks_is_symmetric() {
        let e = parse("abs(x1) + min(x1, 0) + max(x1, 0)", 1).unwrap();
        let d = e.derivative(Var::Space(0));
        assert_eq!(d.eval(0.0, &[0.0]).unwrap(), 1.0);
        assert_eq!(d.eval(0.0, &[2.0]).unwrap(), 2.0);
        assert_eq!(d.eval(0.0, &[-2.0]).unwrap(), 0.0);
    }

    #[test]
    fn variable_queries() {
        let e = parse("x2 * t", 3).unwrap();
        assert_eq!(e.max_var(), Some(1));
        assert!(e.depends_on_time());
        assert!(!parse("x1", 1).unwrap().depends_on_time());
        assert_eq!(Expr::norm_squared(2).eval(0.0, &[3.0, 4.0]).unwrap(), 25.0);
    }
}
