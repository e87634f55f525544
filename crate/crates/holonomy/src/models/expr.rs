//! Small complex-valued expression language for model matrix entries.
//!
//! Grammar (whitespace-insensitive):
//!   expr   := term (('+' | '-') term)*
//!   term   := factor (('*' | '/') factor)*
//!   factor := '-' factor | power
//!   power  := atom ('^' signed-integer)?
//!   atom   := number | 'i' | identifier | func '(' expr ')' | '(' expr ')'
//!   func   := sin | cos | sinh | cosh | tanh | exp | sqrt
//!
//! Exponents are integer literals only. Variables evaluate to real values
//! supplied by the caller.

use std::fmt;

use num_complex::Complex64;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Sinh,
    Cosh,
    Tanh,
    Exp,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "tanh" => Func::Tanh,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn apply(self, z: Complex64) -> Complex64 {
        match self {
            Func::Sin => z.sin(),
            Func::Cos => z.cos(),
            Func::Sinh => z.sinh(),
            Func::Cosh => z.cosh(),
            Func::Tanh => z.tanh(),
            Func::Exp => z.exp(),
            Func::Sqrt => z.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    ImagUnit,
    Var(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

impl Expr {
    /// Evaluate with a variable lookup. Unknown variables and non-finite
    /// results are errors.
    pub fn eval_with(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<Complex64> {
        let z = self.eval_inner(lookup)?;
        if !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::Eval(format!("non-finite value from `{self}`")));
        }
        Ok(z)
    }

    fn eval_inner(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<Complex64> {
        Ok(match self {
            Expr::Num(x) => Complex64::new(*x, 0.0),
            Expr::ImagUnit => Complex64::new(0.0, 1.0),
            Expr::Var(name) => Complex64::new(
                lookup(name).ok_or_else(|| Error::UnboundVar(name.clone()))?,
                0.0,
            ),
            Expr::Neg(a) => -a.eval_inner(lookup)?,
            Expr::Add(a, b) => a.eval_inner(lookup)? + b.eval_inner(lookup)?,
            Expr::Sub(a, b) => a.eval_inner(lookup)? - b.eval_inner(lookup)?,
            Expr::Mul(a, b) => a.eval_inner(lookup)? * b.eval_inner(lookup)?,
            Expr::Div(a, b) => {
                let den = b.eval_inner(lookup)?;
                if den.norm() == 0.0 {
                    return Err(Error::Eval(format!("division by zero in `{self}`")));
                }
                a.eval_inner(lookup)? / den
            }
            Expr::Pow(a, k) => a.eval_inner(lookup)?.powi(*k),
            Expr::Call(f, a) => f.apply(a.eval_inner(lookup)?),
        })
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(..) => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }

    fn fmt_child(&self, child: &Expr, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let _ = self;
        if child.precedence() < min_prec {
            write!(f, "({child})")
        } else {
            write!(f, "{child}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(x) => write!(f, "{x}"),
            Expr::ImagUnit => write!(f, "i"),
            Expr::Var(name) => write!(f, "{name}"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                self.fmt_child(a, 3, f)
            }
            Expr::Add(a, b) => {
                self.fmt_child(a, 1, f)?;
                write!(f, " + ")?;
                self.fmt_child(b, 2, f)
            }
            Expr::Sub(a, b) => {
                self.fmt_child(a, 1, f)?;
                write!(f, " - ")?;
                self.fmt_child(b, 2, f)
            }
            Expr::Mul(a, b) => {
                self.fmt_child(a, 2, f)?;
                write!(f, "*")?;
                self.fmt_child(b, 3, f)
            }
            Expr::Div(a, b) => {
                self.fmt_child(a, 2, f)?;
                write!(f, "/")?;
                self.fmt_child(b, 3, f)
            }
            Expr::Pow(a, k) => {
                self.fmt_child(a, 5, f)?;
                if *k < 0 {
                    write!(f, "^({k})")
                } else {
                    write!(f, "^{k}")
                }
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            offset: self.pos,
            msg: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self
            .src
            .as_bytes()
            .get(self.pos)
            .is_some_and(|b| b.is_ascii_whitespace())
        {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.as_bytes().get(self.pos).copied()
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
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
        let mut lhs = self.factor()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let k = self.exponent()?;
            return Ok(Expr::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<i32> {
        self.skip_ws();
        let parenthesized = self.eat(b'(');
        self.skip_ws();
        let neg = self.eat(b'-');
        self.skip_ws();
        let start = self.pos;
        while self
            .src
            .as_bytes()
            .get(self.pos)
            .is_some_and(|b| b.is_ascii_digit())
        {
            self.pos += 1;
        }
        if self.pos == start {
            return self.err("expected integer exponent");
        }
        let digits = &self.src[start..self.pos];
        let mag: i32 = match digits.parse() {
            Ok(v) => v,
            Err(_) => return self.err(format!("exponent `{digits}` out of range")),
        };
        if parenthesized && !self.eat(b')') {
            return self.err("expected `)` after exponent");
        }
        Ok(if neg { -mag } else { mag })
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => self.err("unexpected end of expression"),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return self.err("expected `)`");
                }
                Ok(inner)
            }
            Some(b) if b.is_ascii_digit() || b == b'.' => self.number(),
            Some(b) if b.is_ascii_alphabetic() || b == b'_' => {
                let name = self.identifier();
                if name == "i" {
                    return Ok(Expr::ImagUnit);
                }
                if let Some(func) = Func::from_name(&name) {
                    if !self.eat(b'(') {
                        return self.err(format!("expected `(` after `{name}`"));
                    }
                    let arg = self.expr()?;
                    if !self.eat(b')') {
                        return self.err("expected `)` closing function call");
                    }
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                Ok(Expr::Var(name))
            }
            Some(b) => self.err(format!("unexpected character `{}`", b as char)),
        }
    }

    fn identifier(&mut self) -> String {
        let start = self.pos;
        while self
            .src
            .as_bytes()
            .get(self.pos)
            .is_some_and(|b| b.is_ascii_alphanumeric() || *b == b'_')
        {
            self.pos += 1;
        }
        self.src[start..self.pos].to_string()
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        while bytes
            .get(self.pos)
            .is_some_and(|b| b.is_ascii_digit() || *b == b'.')
        {
            self.pos += 1;
        }
        // Scientific notation tail: e or E, optional sign, digits.
        if bytes.get(self.pos).is_some_and(|b| *b == b'e' || *b == b'E') {
            let mark = self.pos;
            self.pos += 1;
            if bytes.get(self.pos).is_some_and(|b| *b == b'+' || *b == b'-') {
                self.pos += 1;
            }
            if bytes.get(self.pos).is_some_and(|b| b.is_ascii_digit()) {
                while bytes.get(self.pos).is_some_and(|b| b.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                self.pos = mark;
            }
        }
        let text = &self.src[start..self.pos];
        match text.parse::<f64>() {
            Ok(v) => Ok(Expr::Num(v)),
            Err(_) => {
                self.pos = start;
                self.err(format!("invalid number `{text}`"))
            }
        }
    }
}

/// Parse an expression string; errors carry the byte offset of the failure.
pub fn parse_expr(src: &str) -> Result<Expr> {
    let mut p = Parser { src, pos: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != src.len() {
        return p.err("trailing input");
    }
    Ok(e)
}
