//! Expression grammar for scenario files.
//!
//! ```text
//! sum     := ['+'|'-'] product (('+'|'-') product)*
//! product := power (('*'|'/') power | basis)*
//! power   := atom ['^' INT]
//! atom    := NUM | xI | eps | s | t | tau | (sin|cos) '(' sum ')' | '(' sum ')' | basis
//! basis   := dxI ('^' dxJ)* | dI
//! ```
//!
//! Trig arguments must be integer combinations of coordinates. The printed
//! forms of functions, forms and vector fields parse back to the same value.

use std::fmt;

use fedosov_core::forms::wedge_sign;
use fedosov_core::{Caps, Chart, ChartFunction as F, DifferentialForm, Field, Gen, Mode, Rational, VectorField};
use num_traits::{One, ToPrimitive, Zero};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Lexical,
    Syntax,
    Arity,
    Mode,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::Lexical => "lexical error",
            ErrorKind::Syntax => "syntax error",
            ErrorKind::Arity => "arity error",
            ErrorKind::Mode => "mode error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub kind: ErrorKind,
    pub message: String,
    pub line: usize,
    pub column: usize,
    /// The offending source line with a caret marker under the span.
    pub snippet: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}:{}: {}\n{}", self.kind, self.line, self.column, self.message, self.snippet)
    }
}

impl std::error::Error for ParseError {}

fn error_at(src: &str, kind: ErrorKind, start: usize, end: usize, message: impl Into<String>) -> ParseError {
    let start = start.min(src.len());
    let line_start = src[..start].rfind('\n').map_or(0, |i| i + 1);
    let line_end = src[start..].find('\n').map_or(src.len(), |i| start + i);
    let line = src[..start].matches('\n').count() + 1;
    let column = src[line_start..start].chars().count() + 1;
    let width = src[start..end.clamp(start, line_end)].chars().count().max(1);
    let snippet = format!("  {}\n  {}{}", &src[line_start..line_end], " ".repeat(column - 1), "^".repeat(width));
    ParseError { kind, message: message.into(), line, column, snippet }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(i64),
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

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    start: usize,
    end: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let bytes = src.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let n = src[start..i]
                .parse::<i64>()
                .map_err(|_| error_at(src, ErrorKind::Lexical, start, i, "integer literal too large"))?;
            out.push(Token { tok: Tok::Num(n), start, end: i });
            continue;
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token { tok: Tok::Ident(src[start..i].to_string()), start, end: i });
            continue;
        } else {
            match c {
                b'+' => Tok::Plus,
                b'-' => Tok::Minus,
                b'*' => Tok::Star,
                b'/' => Tok::Slash,
                b'^' => Tok::Caret,
                b'(' => Tok::LParen,
                b')' => Tok::RParen,
                b',' => Tok::Comma,
                _ => {
                    let ch = src[start..].chars().next().unwrap_or('?');
                    return Err(error_at(src, ErrorKind::Lexical, start, start + ch.len_utf8(), format!("unexpected character '{ch}'")));
                }
            }
        };
        i += 1;
        out.push(Token { tok, start, end: i });
    }
    out.push(Token { tok: Tok::End, start: src.len(), end: src.len() });
    Ok(out)
}

/// What the parser needs to know about the target chart.
#[derive(Debug, Clone, Copy)]
pub struct ParseContext {
    pub chart: Chart,
    /// Truncation orders for `eps`, `s`, `t`, `tau`.
    pub caps: Caps,
}

impl ParseContext {
    pub fn new(chart: Chart, eps_order: u8) -> Self {
        ParseContext { chart, caps: Caps::none().with(Gen::Eps, eps_order).with(Gen::S, 1).with(Gen::T, 1).with(Gen::Tau, 1) }
    }
}

/// A parsed expression of one of the three supported shapes.
#[derive(Debug, Clone, PartialEq)]
pub enum Parsed {
    Function(F),
    Form(DifferentialForm),
    VectorField(VectorField),
}

#[derive(Debug, Clone)]
enum Value {
    Fun(F),
    /// Degree and `(mask, coefficient)` terms.
    Form(usize, Vec<(u8, F)>),
    Vector(Vec<F>),
}

impl Value {
    fn shape(&self) -> String {
        match self {
            Value::Fun(_) => "a function".into(),
            Value::Form(d, _) => format!("a {d}-form"),
            Value::Vector(_) => "a vector field".into(),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Token>,
    pos: usize,
    ctx: ParseContext,
}

/// Integer linear combination of coordinates, for trig arguments.
#[derive(Clone)]
struct Lin {
    coeffs: Vec<Rational>,
    constant: Rational,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, kind: ErrorKind, start: usize, end: usize, msg: impl Into<String>) -> ParseError {
        error_at(self.src, kind, start, end, msg)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Token, ParseError> {
        let t = self.peek().clone();
        if t.tok == tok {
            Ok(self.bump())
        } else {
            Err(self.err(ErrorKind::Syntax, t.start, t.end, format!("expected {what}")))
        }
    }

    fn dim(&self) -> usize {
        self.ctx.chart.dim()
    }

    fn index(&self, t: &Token, digits: &str) -> Result<usize, ParseError> {
        let i: usize = digits
            .parse()
            .map_err(|_| self.err(ErrorKind::Lexical, t.start, t.end, "malformed index"))?;
        if i == 0 || i > self.dim() {
            return Err(self.err(ErrorKind::Arity, t.start, t.end, format!("index {i} outside 1..={}", self.dim())));
        }
        Ok(i - 1)
    }

    fn classify(name: &str) -> Option<(&'static str, &str)> {
        for prefix in ["dx", "x", "d"] {
            if let Some(rest) = name.strip_prefix(prefix) {
                if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                    return Some((prefix, rest));
                }
            }
        }
        None
    }

    fn is_basis_start(&self) -> bool {
        match &self.peek().tok {
            Tok::Ident(name) => matches!(Self::classify(name), Some(("dx", _)) | Some(("d", _))),
            _ => false,
        }
    }

    fn sum(&mut self) -> Result<(Value, usize, usize), ParseError> {
        let start = self.peek().start;
        let mut neg = false;
        if matches!(self.peek().tok, Tok::Plus | Tok::Minus) {
            neg = self.bump().tok == Tok::Minus;
        }
        let (mut acc, _, mut end) = self.product()?;
        if neg {
            acc = self.negate(acc);
        }
        loop {
            let op = self.peek().clone();
            let sub = match op.tok {
                Tok::Plus => false,
                Tok::Minus => true,
                _ => break,
            };
            self.bump();
            let (rhs, rs, re) = self.product()?;
            let rhs = if sub { self.negate(rhs) } else { rhs };
            acc = self.add(acc, rhs, rs, re)?;
            end = re;
        }
        Ok((acc, start, end))
    }

    fn negate(&self, v: Value) -> Value {
        match v {
            Value::Fun(f) => Value::Fun(f.neg()),
            Value::Form(d, ts) => Value::Form(d, ts.into_iter().map(|(m, f)| (m, f.neg())).collect()),
            Value::Vector(cs) => Value::Vector(cs.iter().map(|c| c.neg()).collect()),
        }
    }

    fn add(&self, a: Value, b: Value, start: usize, end: usize) -> Result<Value, ParseError> {
        match (a, b) {
            (Value::Fun(x), Value::Fun(y)) => Ok(Value::Fun(x.add(&y))),
            (Value::Form(d, mut x), Value::Form(e, y)) if d == e => {
                x.extend(y);
                Ok(Value::Form(d, x))
            }
            (Value::Vector(x), Value::Vector(y)) => Ok(Value::Vector(x.iter().zip(&y).map(|(p, q)| p.add(q)).collect())),
            (a, b) => Err(self.err(ErrorKind::Arity, start, end, format!("cannot add {} and {}", a.shape(), b.shape()))),
        }
    }

    fn product(&mut self) -> Result<(Value, usize, usize), ParseError> {
        let (mut acc, start, mut end) = self.power()?;
        loop {
            let t = self.peek().clone();
            match t.tok {
                Tok::Star => {
                    self.bump();
                    let (rhs, rs, re) = self.power()?;
                    acc = self.mul(acc, rhs, rs, re)?;
                    end = re;
                }
                Tok::Slash => {
                    self.bump();
                    let (rhs, rs, re) = self.power()?;
                    let c = match &rhs {
                        Value::Fun(f) => f.as_scalar().and_then(|s| s.as_field()),
                        _ => None,
                    };
                    let c = c.ok_or_else(|| self.err(ErrorKind::Arity, rs, re, "division by a non-constant"))?;
                    if c.is_zero() {
                        return Err(self.err(ErrorKind::Arity, rs, re, "division by zero"));
                    }
                    acc = self.scale(acc, &(Rational::one() / c));
                    end = re;
                }
                Tok::Ident(_) if self.is_basis_start() => {
                    let (rhs, rs, re) = self.basis()?;
                    acc = self.mul(acc, rhs, rs, re)?;
                    end = re;
                }
                _ => break,
            }
        }
        Ok((acc, start, end))
    }

    fn scale(&self, v: Value, c: &Rational) -> Value {
        match v {
            Value::Fun(f) => Value::Fun(f.scale(c)),
            Value::Form(d, ts) => Value::Form(d, ts.into_iter().map(|(m, f)| (m, f.scale(c))).collect()),
            Value::Vector(cs) => Value::Vector(cs.iter().map(|f| f.scale(c)).collect()),
        }
    }

    fn mul(&self, a: Value, b: Value, start: usize, end: usize) -> Result<Value, ParseError> {
        match (a, b) {
            (Value::Fun(x), Value::Fun(y)) => Ok(Value::Fun(x.mul(&y))),
            (Value::Fun(x), Value::Form(d, ts)) | (Value::Form(d, ts), Value::Fun(x)) => {
                Ok(Value::Form(d, ts.into_iter().map(|(m, f)| (m, f.mul(&x))).collect()))
            }
            (Value::Fun(x), Value::Vector(cs)) | (Value::Vector(cs), Value::Fun(x)) => {
                Ok(Value::Vector(cs.iter().map(|c| c.mul(&x)).collect()))
            }
            (a, b) => Err(self.err(ErrorKind::Arity, start, end, format!("cannot multiply {} by {}", a.shape(), b.shape()))),
        }
    }

    fn power(&mut self) -> Result<(Value, usize, usize), ParseError> {
        let (base, start, end) = self.atom()?;
        if self.peek().tok != Tok::Caret {
            return Ok((base, start, end));
        }
        let caret = self.bump();
        let t = self.peek().clone();
        let n = match t.tok {
            Tok::Num(n) => {
                self.bump();
                n
            }
            Tok::Minus => return Err(self.err(ErrorKind::Arity, t.start, t.end, "negative exponents are not supported")),
            _ => return Err(self.err(ErrorKind::Syntax, caret.start, t.end, "expected an integer exponent after '^'")),
        };
        match base {
            Value::Fun(f) => {
                let n = u32::try_from(n).map_err(|_| self.err(ErrorKind::Arity, t.start, t.end, "exponent too large"))?;
                Ok((Value::Fun(f.pow(n)), start, t.end))
            }
            other => Err(self.err(ErrorKind::Arity, start, t.end, format!("cannot raise {} to a power", other.shape()))),
        }
    }

    fn atom(&mut self) -> Result<(Value, usize, usize), ParseError> {
        let t = self.peek().clone();
        let ch = self.ctx.chart;
        match &t.tok {
            Tok::Num(n) => {
                self.bump();
                Ok((Value::Fun(F::from_int(ch, *n)), t.start, t.end))
            }
            Tok::LParen => {
                self.bump();
                let (v, _, _) = self.sum()?;
                let close = self.expect(Tok::RParen, "')'")?;
                Ok((v, t.start, close.end))
            }
            Tok::Ident(name) => {
                if let Some(g) = Gen::from_name(name) {
                    self.bump();
                    let cap = self.ctx.caps.get(g).unwrap_or(1);
                    return Ok((Value::Fun(F::gen(ch, g, cap)), t.start, t.end));
                }
                match name.as_str() {
                    "sin" | "cos" => return self.trig(name == "cos"),
                    _ => {}
                }
                match Self::classify(name) {
                    Some(("x", digits)) => {
                        let i = self.index(&t, digits)?;
                        if ch.mode == Mode::Torus {
                            return Err(self.err(
                                ErrorKind::Mode,
                                t.start,
                                t.end,
                                format!("coordinate {name} is not periodic; in torus mode it may only appear inside sin/cos"),
                            ));
                        }
                        self.bump();
                        Ok((Value::Fun(F::coord(ch, i)), t.start, t.end))
                    }
                    Some(_) => self.basis(),
                    None => Err(self.err(ErrorKind::Lexical, t.start, t.end, format!("unknown identifier '{name}'"))),
                }
            }
            Tok::End => Err(self.err(ErrorKind::Syntax, t.start, t.end, "unexpected end of input")),
            _ => Err(self.err(ErrorKind::Syntax, t.start, t.end, "expected a number, coordinate, function or '('")),
        }
    }

    fn basis(&mut self) -> Result<(Value, usize, usize), ParseError> {
        let t = self.bump();
        let Tok::Ident(name) = &t.tok else { unreachable!("basis called on an identifier") };
        let ch = self.ctx.chart;
        match Self::classify(name) {
            Some(("d", digits)) => {
                let i = self.index(&t, digits)?;
                let mut cs = vec![F::zero(ch); ch.dim()];
                cs[i] = F::one(ch);
                Ok((Value::Vector(cs), t.start, t.end))
            }
            Some(("dx", digits)) => {
                let mut mask = 1u8 << self.index(&t, digits)?;
                let mut degree = 1;
                let mut sign = false;
                let mut end = t.end;
                while self.peek().tok == Tok::Caret {
                    let caret = self.bump();
                    let n = self.bump();
                    let next = match &n.tok {
                        Tok::Ident(s) => match Self::classify(s) {
                            Some(("dx", d)) => self.index(&n, d)?,
                            _ => return Err(self.err(ErrorKind::Syntax, caret.start, n.end, "expected dxI after '^' in a wedge product")),
                        },
                        _ => return Err(self.err(ErrorKind::Syntax, caret.start, n.end, "expected dxI after '^' in a wedge product")),
                    };
                    end = n.end;
                    degree += 1;
                    match wedge_sign(mask, 1 << next) {
                        Some(s) => {
                            sign ^= s;
                            mask |= 1 << next;
                        }
                        None => mask = 0,
                    }
                }
                let coeff = if mask == 0 {
                    F::zero(ch)
                } else if sign {
                    F::one(ch).neg()
                } else {
                    F::one(ch)
                };
                let terms = if mask == 0 { vec![] } else { vec![(mask, coeff)] };
                Ok((Value::Form(degree, terms), t.start, end))
            }
            _ => Err(self.err(ErrorKind::Syntax, t.start, t.end, "expected dxI or dI")),
        }
    }

    fn trig(&mut self, cos: bool) -> Result<(Value, usize, usize), ParseError> {
        let name = self.bump();
        let ch = self.ctx.chart;
        if ch.mode != Mode::Torus {
            return Err(self.err(ErrorKind::Mode, name.start, name.end, "sin/cos are only available in torus mode"));
        }
        self.expect(Tok::LParen, "'(' after function name")?;
        let arg_start = self.peek().start;
        let lin = self.lin_sum()?;
        let arg_end = self.toks[self.pos.saturating_sub(1)].end;
        if self.peek().tok == Tok::Comma {
            let t = self.peek().clone();
            return Err(self.err(ErrorKind::Arity, t.start, t.end, "sin/cos take exactly one argument"));
        }
        let close = self.expect(Tok::RParen, "')'")?;
        if !lin.constant.is_zero() {
            return Err(self.err(ErrorKind::Arity, arg_start, arg_end, "trig arguments may not contain a constant phase"));
        }
        let mut k = Vec::with_capacity(ch.dim());
        for c in &lin.coeffs {
            if !c.is_integer() {
                return Err(self.err(ErrorKind::Arity, arg_start, arg_end, "trig frequencies must be integers"));
            }
            let (n, _) = c.numer_denom();
            k.push(n.to_i64().filter(|v| v.abs() < i16::MAX as i64).ok_or_else(|| {
                self.err(ErrorKind::Arity, arg_start, arg_end, "trig frequency too large")
            })?);
        }
        let f = if cos { F::cos(ch, &k) } else { F::sin(ch, &k) };
        Ok((Value::Fun(f), name.start, close.end))
    }

    fn lin_sum(&mut self) -> Result<Lin, ParseError> {
        let mut neg = false;
        if matches!(self.peek().tok, Tok::Plus | Tok::Minus) {
            neg = self.bump().tok == Tok::Minus;
        }
        let mut acc = self.lin_product()?;
        if neg {
            acc = lin_scale(&acc, &-Rational::one());
        }
        loop {
            let sub = match self.peek().tok {
                Tok::Plus => false,
                Tok::Minus => true,
                _ => break,
            };
            self.bump();
            let rhs = self.lin_product()?;
            let rhs = if sub { lin_scale(&rhs, &-Rational::one()) } else { rhs };
            acc = Lin {
                coeffs: acc.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a.clone() + b.clone()).collect(),
                constant: acc.constant + rhs.constant,
            };
        }
        Ok(acc)
    }

    fn lin_product(&mut self) -> Result<Lin, ParseError> {
        let start = self.peek().start;
        let mut acc = self.lin_atom()?;
        loop {
            let t = self.peek().clone();
            let div = match t.tok {
                Tok::Star => false,
                Tok::Slash => true,
                _ => break,
            };
            self.bump();
            let rhs = self.lin_atom()?;
            let end = self.toks[self.pos.saturating_sub(1)].end;
            let a_const = acc.coeffs.iter().all(|c| c.is_zero());
            let b_const = rhs.coeffs.iter().all(|c| c.is_zero());
            acc = if div {
                if !b_const || rhs.constant.is_zero() {
                    return Err(self.err(ErrorKind::Arity, start, end, "trig arguments must be linear in the coordinates"));
                }
                lin_scale(&acc, &(Rational::one() / rhs.constant))
            } else if b_const {
                lin_scale(&acc, &rhs.constant)
            } else if a_const {
                lin_scale(&rhs, &acc.constant)
            } else {
                return Err(self.err(ErrorKind::Arity, start, end, "trig arguments must be linear in the coordinates"));
            };
        }
        Ok(acc)
    }

    fn lin_atom(&mut self) -> Result<Lin, ParseError> {
        let t = self.peek().clone();
        let n = self.dim();
        let zero = || vec![Rational::zero(); n];
        match &t.tok {
            Tok::Num(v) => {
                self.bump();
                Ok(Lin { coeffs: zero(), constant: Rational::from(*v) })
            }
            Tok::Minus => {
                self.bump();
                Ok(lin_scale(&self.lin_atom()?, &-Rational::one()))
            }
            Tok::LParen => {
                self.bump();
                let l = self.lin_sum()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(l)
            }
            Tok::Ident(name) => match Self::classify(name) {
                Some(("x", digits)) => {
                    let i = self.index(&t, digits)?;
                    self.bump();
                    let mut c = zero();
                    c[i] = Rational::one();
                    Ok(Lin { coeffs: c, constant: Rational::zero() })
                }
                _ => Err(self.err(ErrorKind::Arity, t.start, t.end, format!("'{name}' cannot appear in a trig argument"))),
            },
            _ => Err(self.err(ErrorKind::Syntax, t.start, t.end, "expected a coordinate or integer")),
        }
    }
}

fn lin_scale(l: &Lin, c: &Rational) -> Lin {
    Lin { coeffs: l.coeffs.iter().map(|x| x.clone() * c.clone()).collect(), constant: l.constant.clone() * c.clone() }
}

fn parse_value(src: &str, ctx: ParseContext) -> Result<Value, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { src, toks, pos: 0, ctx };
    let (v, _, _) = p.sum()?;
    let t = p.peek().clone();
    if t.tok != Tok::End {
        let msg = if t.tok == Tok::RParen { "unmatched ')'" } else { "unexpected trailing input" };
        return Err(p.err(ErrorKind::Syntax, t.start, t.end, msg));
    }
    Ok(v)
}

fn to_form(chart: Chart, degree: usize, terms: Vec<(u8, F)>) -> DifferentialForm {
    terms
        .into_iter()
        .fold(DifferentialForm::zero(chart, degree), |acc, (m, f)| acc.add(&DifferentialForm::monomial(m, f)))
}

/// Parse a function, differential form or vector field.
pub fn parse_expression(src: &str, ctx: ParseContext) -> Result<Parsed, ParseError> {
    Ok(match parse_value(src, ctx)? {
        Value::Fun(f) => Parsed::Function(f),
        Value::Form(d, ts) => Parsed::Form(to_form(ctx.chart, d, ts)),
        Value::Vector(cs) => Parsed::VectorField(VectorField::new(cs)),
    })
}

fn whole(src: &str) -> (usize, usize) {
    let start = src.len() - src.trim_start().len();
    (start, src.trim_end().len().max(start + 1))
}

pub fn parse_function(src: &str, ctx: ParseContext) -> Result<F, ParseError> {
    match parse_value(src, ctx)? {
        Value::Fun(f) => Ok(f),
        other => {
            let (s, e) = whole(src);
            Err(error_at(src, ErrorKind::Arity, s, e, format!("expected a function, found {}", other.shape())))
        }
    }
}

/// Parse a form of the given degree; a bare function is a 0-form and `0` fits any degree.
pub fn parse_form(src: &str, ctx: ParseContext, degree: usize) -> Result<DifferentialForm, ParseError> {
    let v = parse_value(src, ctx)?;
    match v {
        Value::Fun(f) if degree == 0 || f.is_zero() => {
            Ok(if f.is_zero() { DifferentialForm::zero(ctx.chart, degree) } else { DifferentialForm::function(f) })
        }
        Value::Form(d, ts) if d == degree => Ok(to_form(ctx.chart, d, ts)),
        other => {
            let (s, e) = whole(src);
            Err(error_at(src, ErrorKind::Arity, s, e, format!("expected a {degree}-form, found {}", other.shape())))
        }
    }
}

pub fn parse_vector_field(src: &str, ctx: ParseContext) -> Result<VectorField, ParseError> {
    match parse_value(src, ctx)? {
        Value::Vector(cs) => Ok(VectorField::new(cs)),
        Value::Fun(f) if f.is_zero() => Ok(VectorField::zero(ctx.chart)),
        other => {
            let (s, e) = whole(src);
            Err(error_at(src, ErrorKind::Arity, s, e, format!("expected a vector field, found {}", other.shape())))
        }
    }
}
