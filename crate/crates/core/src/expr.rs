//! Infix formulas for metric components.
//!
//! Grammar (no implicit multiplication):
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' integer)*
//! atom    := number | symbol | func '(' sum ')' | '(' sum ')'
//! integer := '-'? digits | '(' '-'? digits ')'
//! ```
//!
//! Symbols are `x1 .. xd` for a `d`-dimensional chart, `y` for the last
//! coordinate, and the constants `pi` and `e`. Error offsets are 1-based
//! byte positions; an error at end of input points one past the last byte.

use thiserror::Error;

use crate::jet::{Elementary, Jet, JetError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown symbol `{name}` at offset {offset}")]
    UnknownSymbol { name: String, offset: usize },
    #[error("expansion is singular at the chart point: {0}")]
    SingularExpansion(JetError),
    #[error("center has {got} coordinates, chart has {expected}")]
    CenterDimension { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn elementary(self) -> Elementary {
        match self {
            Func::Sin => Elementary::Sin,
            Func::Cos => Elementary::Cos,
            Func::Exp => Elementary::Exp,
            Func::Sqrt => Elementary::Sqrt,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Zero-based coordinate index.
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq)]
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

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, usize)>, ExprError> {
        let mut lx = Lexer {
            src: src.as_bytes(),
            pos: 0,
        };
        let mut out = Vec::new();
        loop {
            let (tok, at) = lx.next()?;
            let end = tok == Tok::End;
            out.push((tok, at));
            if end {
                return Ok(out);
            }
        }
    }

    fn next(&mut self) -> Result<(Tok, usize), ExprError> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = self.src.get(self.pos) else {
            return Ok((Tok::End, start + 1));
        };
        let single = match c {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(t) = single {
            self.pos += 1;
            return Ok((t, start + 1));
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number(start);
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while self
                .src
                .get(self.pos)
                .is_some_and(|b| b.is_ascii_alphanumeric() || *b == b'_')
            {
                self.pos += 1;
            }
            let name = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
            return Ok((Tok::Ident(name), start + 1));
        }
        Err(ExprError::Syntax {
            offset: start + 1,
            message: format!("unexpected character {:?}", char::from(c)),
        })
    }

    fn number(&mut self, start: usize) -> Result<(Tok, usize), ExprError> {
        let digits = |lx: &mut Lexer| {
            let s = lx.pos;
            while lx.src.get(lx.pos).is_some_and(u8::is_ascii_digit) {
                lx.pos += 1;
            }
            lx.pos - s
        };
        let mut n = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            return Err(ExprError::Syntax {
                offset: start + 1,
                message: "malformed number".into(),
            });
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                // not an exponent; leave `e` for the identifier lexer
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>()
            .map(|v| (Tok::Num(v), start + 1))
            .map_err(|_| ExprError::Syntax {
                offset: start + 1,
                message: format!("malformed number `{text}`"),
            })
    }
}

const MAX_DEPTH: usize = 200;

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    dim: usize,
    depth: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if t != Tok::End {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Syntax {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ExprError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected {what}"))
        }
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.product()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.product()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.product()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
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
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return self.error("expression nested too deeply");
        }
        let out = if *self.peek() == Tok::Minus {
            self.bump();
            self.unary().map(|e| Expr::Neg(Box::new(e)))
        } else {
            self.power()
        };
        self.depth -= 1;
        out
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let mut base = self.atom()?;
        while *self.peek() == Tok::Caret {
            self.bump();
            let e = self.integer()?;
            base = Expr::Pow(Box::new(base), e);
        }
        Ok(base)
    }

    fn integer(&mut self) -> Result<i32, ExprError> {
        let paren = *self.peek() == Tok::LParen;
        if paren {
            self.bump();
        }
        let neg = *self.peek() == Tok::Minus;
        if neg {
            self.bump();
        }
        let Tok::Num(v) = self.peek().clone() else {
            return self.error("expected integer exponent");
        };
        if v.fract() != 0.0 || v > f64::from(i32::MAX) {
            return self.error("exponent must be an integer");
        }
        self.bump();
        if paren {
            self.expect(Tok::RParen, "`)`")?;
        }
        let e = v as i32;
        Ok(if neg { -e } else { e })
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let inner = self.sum()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if let Some(f) = Func::from_name(&name) {
                    self.expect(Tok::LParen, "`(` after function name")?;
                    let arg = self.sum()?;
                    self.expect(Tok::RParen, "`)`")?;
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                self.symbol(name, at)
            }
            Tok::End => {
                self.pos = self.toks.len() - 1;
                self.error("unexpected end of input")
            }
            _ => {
                self.pos -= 1;
                self.error("expected a number, symbol or `(`")
            }
        }
    }

    fn symbol(&self, name: String, offset: usize) -> Result<Expr, ExprError> {
        match name.as_str() {
            "pi" => return Ok(Expr::Num(std::f64::consts::PI)),
            "e" => return Ok(Expr::Num(std::f64::consts::E)),
            "y" if self.dim >= 1 => return Ok(Expr::Var(self.dim - 1)),
            _ => {}
        }
        if let Some(idx) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
            if (1..=self.dim).contains(&idx) && !name[1..].starts_with('0') {
                return Ok(Expr::Var(idx - 1));
            }
        }
        Err(ExprError::UnknownSymbol { name, offset })
    }
}

/// Parses `src` for a chart of dimension `dim`.
pub fn parse(src: &str, dim: usize) -> Result<Expr, ExprError> {
    let toks = Lexer::tokens(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        dim,
        depth: 0,
    };
    let e = p.sum()?;
    if *p.peek() != Tok::End {
        return p.error("unexpected trailing input");
    }
    Ok(e)
}

impl Expr {
    /// Direct floating-point evaluation at an absolute chart point.
    pub fn eval(&self, point: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => point[*i],
            Expr::Neg(a) => -a.eval(point),
            Expr::Add(a, b) => a.eval(point) + b.eval(point),
            Expr::Sub(a, b) => a.eval(point) - b.eval(point),
            Expr::Mul(a, b) => a.eval(point) * b.eval(point),
            Expr::Div(a, b) => a.eval(point) / b.eval(point),
            Expr::Pow(a, k) => a.eval(point).powi(*k),
            Expr::Call(f, a) => {
                let v = a.eval(point);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Sqrt => v.sqrt(),
                }
            }
        }
    }

    /// Taylor expansion about `center` to total degree `order`. The jet's
    /// variables are offsets from `center`.
    pub fn expand(&self, center: &[f64], order: usize) -> Result<Jet, ExprError> {
        let d = center.len();
        let singular = ExprError::SingularExpansion;
        Ok(match self {
            Expr::Num(v) => Jet::constant(d, order, *v),
            Expr::Var(i) => {
                if *i >= d {
                    return Err(ExprError::CenterDimension {
                        expected: i + 1,
                        got: d,
                    });
                }
                Jet::coordinate(d, order, *i, center[*i])
            }
            Expr::Neg(a) => -a.expand(center, order)?,
            Expr::Add(a, b) => a.expand(center, order)? + b.expand(center, order)?,
            Expr::Sub(a, b) => a.expand(center, order)? - b.expand(center, order)?,
            Expr::Mul(a, b) => a.expand(center, order)? * b.expand(center, order)?,
            Expr::Div(a, b) => {
                let den = b.expand(center, order)?.reciprocal().map_err(singular)?;
                a.expand(center, order)? * den
            }
            Expr::Pow(a, k) => a.expand(center, order)?.powi(*k).map_err(singular)?,
            Expr::Call(f, a) => a
                .expand(center, order)?
                .apply(f.elementary())
                .map_err(singular)?,
        })
    }

    /// Largest coordinate index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.max_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.max_var().max(b.max_var())
            }
        }
    }
}

/// Parses and expands in one step.
pub fn expand(src: &str, center: &[f64], order: usize) -> Result<Jet, ExprError> {
    parse(src, center.len())?.expand(center, order)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(e: Expr) -> Box<Expr> {
        Box::new(e)
    }

    #[test]
    fn precedence_examples() {
        assert_eq!(
            parse("1 + x1^2", 1).unwrap(),
            Expr::Add(b(Expr::Num(1.0)), b(Expr::Pow(b(Expr::Var(0)), 2)))
        );
        assert_eq!(
            parse("sin(x1)*cos(x2)", 2).unwrap(),
            Expr::Mul(
                b(Expr::Call(Func::Sin, b(Expr::Var(0)))),
                b(Expr::Call(Func::Cos, b(Expr::Var(1))))
            )
        );
        // unary minus binds looser than ^
        assert_eq!(
            parse("-x1^2", 1).unwrap(),
            Expr::Neg(b(Expr::Pow(b(Expr::Var(0)), 2)))
        );
        // left associativity
        assert_eq!(
            parse("x1 - 1 - 2", 1).unwrap(),
            Expr::Sub(
                b(Expr::Sub(b(Expr::Var(0)), b(Expr::Num(1.0)))),
                b(Expr::Num(2.0))
            )
        );
        assert_eq!(parse("y", 3).unwrap(), Expr::Var(2));
        assert_eq!(parse("x1^(-2)", 1).unwrap(), parse("x1^-2", 1).unwrap());
    }

    #[test]
    fn error_offsets() {
        assert!(matches!(
            parse("1/(x1", 1),
            Err(ExprError::Syntax { offset: 6, .. })
        ));
        assert!(matches!(
            parse("x1 x2", 2),
            Err(ExprError::Syntax { offset: 4, .. })
        ));
        assert!(matches!(
            parse("2 $ 3", 1),
            Err(ExprError::Syntax { offset: 3, .. })
        ));
        assert!(matches!(parse("x1^1.5", 1), Err(ExprError::Syntax { .. })));
        assert!(matches!(
            parse("", 1),
            Err(ExprError::Syntax { offset: 1, .. })
        ));
        assert_eq!(
            parse("x3 + 1", 2),
            Err(ExprError::UnknownSymbol {
                name: "x3".into(),
                offset: 1
            })
        );
        assert!(matches!(
            parse("tan(x1)", 1),
            Err(ExprError::UnknownSymbol { .. })
        ));
        assert!(matches!(
            parse("foo", 1),
            Err(ExprError::UnknownSymbol { .. })
        ));
        assert!(matches!(
            parse("x0", 1),
            Err(ExprError::UnknownSymbol { .. })
        ));
    }

    #[test]
    fn scientific_literals() {
        assert_eq!(parse("1e-3", 1).unwrap(), Expr::Num(1e-3));
        assert_eq!(parse(".5", 1).unwrap(), Expr::Num(0.5));
        // `2*e` is the constant, not an exponent
        assert_eq!(
            parse("2*e", 1).unwrap(),
            Expr::Mul(b(Expr::Num(2.0)), b(Expr::Num(std::f64::consts::E)))
        );
    }

    #[test]
    fn expansion_examples() {
        let j = expand("exp(x1)", &[0.0], 2).unwrap();
        assert!(j.approx_eq(&Jet::univariate(&[1.0, 1.0, 0.5]), 1e-15));
        let j = expand("1/(1-x1)", &[0.0], 3).unwrap();
        assert!(j.approx_eq(&Jet::univariate(&[1.0, 1.0, 1.0, 1.0]), 1e-15));
        let c = std::f64::consts::FRAC_PI_2;
        let j = expand("sin(x1)", &[c], 2).unwrap();
        assert!(j.approx_eq(&Jet::univariate(&[1.0, 0.0, -0.5]), 1e-15));
        // high-precision samples of sin near pi/2
        for dx in [1e-2, -2e-2] {
            let err = (j.eval(&[dx]) - (c + dx).sin()).abs();
            assert!(err <= dx.abs().powi(3));
        }
    }

    #[test]
    fn singular_expansions() {
        assert!(matches!(
            expand("1/x1", &[0.0], 2),
            Err(ExprError::SingularExpansion(_))
        ));
        assert!(matches!(
            expand("sqrt(x1 - 1)", &[1.0], 2),
            Err(ExprError::SingularExpansion(_))
        ));
        assert!(matches!(
            expand("x1^-1", &[0.0], 2),
            Err(ExprError::SingularExpansion(_))
        ));
        assert!(expand("sqrt(x1)", &[4.0], 3).is_ok());
    }
}
