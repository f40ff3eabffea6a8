//! Monomials, posynomials and their log-space evaluation.
//!
//! A [`Monomial`] is `c * v1^a1 * ... * vn^an` with `c > 0` and real
//! exponents; a [`Posynomial`] is a non-empty sum of monomials. Variables are
//! referenced by [`VarId`] into a [`VariableRegistry`] that also stores the
//! positive box `[lower, upper]` of every variable.
//!
//! With `v = exp[z]` every posynomial becomes `log-sum-exp(A z + b)`, which is
//! convex in `z`; [`Posynomial::log_space_eval`] and
//! [`Posynomial::log_space_grad`] evaluate that form without overflow.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// Index of a variable in a [`VariableRegistry`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    /// Control round the variable belongs to, when it has one.
    pub round: Option<usize>,
}

impl Variable {
    pub fn is_fixed(&self) -> bool {
        self.lower == self.upper
    }
}

/// Named positive variables with their boxes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VariableRegistry {
    vars: Vec<Variable>,
    by_name: BTreeMap<String, VarId>,
}

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl VariableRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, lower: f64, upper: f64) -> Result<VarId> {
        self.add_with_round(name, lower, upper, None)
    }

    pub fn add_with_round(
        &mut self,
        name: &str,
        lower: f64,
        upper: f64,
        round: Option<usize>,
    ) -> Result<VarId> {
        if !valid_name(name) {
            return Err(Error::Parse {
                pos: 0,
                msg: format!("invalid variable name `{name}`"),
            });
        }
        if self.by_name.contains_key(name) {
            return Err(Error::DuplicateVariable(name.to_string()));
        }
        if !(lower.is_finite() && upper.is_finite() && lower > 0.0 && lower <= upper) {
            return Err(Error::InvalidBounds {
                name: name.to_string(),
                lower,
                upper,
            });
        }
        let id = VarId(self.vars.len());
        self.vars.push(Variable {
            name: name.to_string(),
            lower,
            upper,
            round,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<VarId> {
        self.by_name.get(name).copied()
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.0]
    }

    pub fn name(&self, id: VarId) -> &str {
        &self.vars[id.0].name
    }

    pub fn contains(&self, id: VarId) -> bool {
        id.0 < self.vars.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, &Variable)> {
        self.vars.iter().enumerate().map(|(i, v)| (VarId(i), v))
    }

    pub fn lowers(&self) -> Vec<f64> {
        self.vars.iter().map(|v| v.lower).collect()
    }

    pub fn uppers(&self) -> Vec<f64> {
        self.vars.iter().map(|v| v.upper).collect()
    }

    /// Geometric midpoint of every box.
    pub fn geometric_midpoint(&self) -> Vec<f64> {
        self.vars.iter().map(|v| (v.lower * v.upper).sqrt()).collect()
    }
}

fn cmp_exponents(a: &[(VarId, f64)], b: &[(VarId, f64)]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.0.cmp(&y.0).then(x.1.total_cmp(&y.1));
        if o != Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

fn check_coeff(c: f64) -> Result<()> {
    if c.is_finite() && c > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveCoefficient(c))
    }
}

fn pow_value(v: f64, a: f64) -> f64 {
    if a.fract() == 0.0 && a.abs() < i32::MAX as f64 {
        v.powi(a as i32)
    } else {
        v.powf(a)
    }
}

/// `c * prod(v_i^a_i)` with `c > 0`; exponents are kept sorted by variable
/// and never contain zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    coeff: f64,
    exps: Vec<(VarId, f64)>,
}

impl Monomial {
    pub fn new(coeff: f64, exps: impl IntoIterator<Item = (VarId, f64)>) -> Result<Self> {
        check_coeff(coeff)?;
        let mut acc: BTreeMap<VarId, f64> = BTreeMap::new();
        for (v, a) in exps {
            if !a.is_finite() {
                return Err(Error::NonFiniteExponent(a));
            }
            *acc.entry(v).or_insert(0.0) += a;
        }
        Ok(Self {
            coeff,
            exps: acc.into_iter().filter(|&(_, a)| a != 0.0).collect(),
        })
    }

    pub fn constant(coeff: f64) -> Result<Self> {
        Self::new(coeff, [])
    }

    pub fn var(id: VarId) -> Self {
        Self {
            coeff: 1.0,
            exps: vec![(id, 1.0)],
        }
    }

    pub fn coeff(&self) -> f64 {
        self.coeff
    }

    pub fn exponents(&self) -> &[(VarId, f64)] {
        &self.exps
    }

    pub fn exponent(&self, id: VarId) -> f64 {
        self.exps
            .binary_search_by(|(v, _)| v.cmp(&id))
            .map(|i| self.exps[i].1)
            .unwrap_or(0.0)
    }

    pub fn is_constant(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut exps = Vec::with_capacity(self.exps.len() + other.exps.len());
        let (mut i, mut j) = (0, 0);
        while i < self.exps.len() || j < other.exps.len() {
            match (self.exps.get(i), other.exps.get(j)) {
                (Some(&(a, x)), Some(&(b, y))) if a == b => {
                    if x + y != 0.0 {
                        exps.push((a, x + y));
                    }
                    i += 1;
                    j += 1;
                }
                (Some(&(a, x)), Some(&(b, _))) if a < b => {
                    exps.push((a, x));
                    i += 1;
                }
                (Some(&(a, x)), None) => {
                    exps.push((a, x));
                    i += 1;
                }
                (_, Some(&(b, y))) => {
                    exps.push((b, y));
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        Monomial {
            coeff: self.coeff * other.coeff,
            exps,
        }
    }

    /// Real power; monomials are closed under any finite exponent.
    pub fn powf(&self, r: f64) -> Result<Monomial> {
        if !r.is_finite() {
            return Err(Error::NonFiniteExponent(r));
        }
        let coeff = self.coeff.powf(r);
        check_coeff(coeff)?;
        Ok(Monomial {
            coeff,
            exps: self
                .exps
                .iter()
                .map(|&(v, a)| (v, a * r))
                .filter(|&(_, a)| a != 0.0)
                .collect(),
        })
    }

    pub fn scale(&self, c: f64) -> Result<Monomial> {
        check_coeff(c)?;
        let coeff = self.coeff * c;
        check_coeff(coeff)?;
        Ok(Monomial {
            coeff,
            exps: self.exps.clone(),
        })
    }

    pub fn evaluate(&self, theta: &[f64]) -> Result<f64> {
        let mut v = self.coeff;
        for &(id, a) in &self.exps {
            let x = *theta.get(id.0).ok_or(Error::MissingAssignment(id.0))?;
            if !(x > 0.0) {
                return Err(Error::NonPositiveValue {
                    index: id.0,
                    value: x,
                });
            }
            v *= pow_value(x, a);
        }
        Ok(v)
    }

    /// `log c + a'z`.
    pub fn log_eval(&self, z: &[f64]) -> f64 {
        self.exps
            .iter()
            .fold(self.coeff.ln(), |acc, &(id, a)| acc + a * z[id.0])
    }

    fn same_exponents(&self, other: &Monomial) -> bool {
        cmp_exponents(&self.exps, &other.exps) == Ordering::Equal
    }
}

impl From<Monomial> for Posynomial {
    fn from(m: Monomial) -> Self {
        Posynomial { terms: vec![m] }
    }
}

/// Numerically stable `log(sum(exp(y)))`; `-inf` for an empty slice.
pub fn log_sum_exp(ys: &[f64]) -> f64 {
    let m = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = ys.iter().map(|&y| (y - m).exp()).sum();
    m + s.ln()
}

/// Softmax weights of `ys` written into `out`; returns the log-sum-exp.
pub fn softmax_into(ys: &[f64], out: &mut Vec<f64>) -> f64 {
    let m = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.clear();
    out.extend(ys.iter().map(|&y| (y - m).exp()));
    let s: f64 = out.iter().sum();
    for w in out.iter_mut() {
        *w /= s;
    }
    m + s.ln()
}

/// A non-empty sum of monomials.
#[derive(Debug, Clone, PartialEq)]
pub struct Posynomial {
    terms: Vec<Monomial>,
}

impl Posynomial {
    /// Builds a posynomial from raw terms without merging like terms.
    pub fn from_terms(terms: Vec<Monomial>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::EmptyPosynomial);
        }
        Ok(Self { terms })
    }

    /// Builds and canonicalizes.
    pub fn new(terms: Vec<Monomial>) -> Result<Self> {
        Ok(Self::from_terms(terms)?.canonicalize())
    }

    pub fn constant(c: f64) -> Result<Self> {
        Ok(Monomial::constant(c)?.into())
    }

    pub fn var(id: VarId) -> Self {
        Monomial::var(id).into()
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_monomial(&self) -> Option<&Monomial> {
        match self.terms.as_slice() {
            [m] => Some(m),
            _ => None,
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<VarId> {
        self.terms
            .iter()
            .filter_map(|t| t.exps.last().map(|e| e.0))
            .max()
    }

    /// Merges terms with bitwise-identical exponent maps and sorts terms
    /// lexicographically by exponent map.
    pub fn canonicalize(&self) -> Posynomial {
        let mut terms = self.terms.clone();
        terms.sort_by(|a, b| cmp_exponents(&a.exps, &b.exps));
        let mut out: Vec<Monomial> = Vec::with_capacity(terms.len());
        for t in terms {
            match out.last_mut() {
                Some(last) if last.same_exponents(&t) => last.coeff += t.coeff,
                _ => out.push(t),
            }
        }
        Posynomial { terms: out }
    }

    pub fn add(&self, other: &Posynomial) -> Posynomial {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Posynomial { terms }.canonicalize()
    }

    pub fn mul(&self, other: &Posynomial) -> Posynomial {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                terms.push(a.mul(b));
            }
        }
        Posynomial { terms }.canonicalize()
    }

    pub fn mul_monomial(&self, m: &Monomial) -> Posynomial {
        Posynomial {
            terms: self.terms.iter().map(|t| t.mul(m)).collect(),
        }
        .canonicalize()
    }

    pub fn scale(&self, c: f64) -> Result<Posynomial> {
        Ok(Posynomial {
            terms: self
                .terms
                .iter()
                .map(|t| t.scale(c))
                .collect::<Result<_>>()?,
        })
    }

    /// Integer power by repeated multiplication.
    pub fn pow(&self, k: u32) -> Result<Posynomial> {
        if k == 0 {
            return Err(Error::InvalidPower(k));
        }
        let mut acc = self.clone();
        for _ in 1..k {
            acc = acc.mul(self);
        }
        Ok(acc)
    }

    /// Real power, only defined for single-term posynomials unless `r` is a
    /// positive integer.
    pub fn powf(&self, r: f64) -> Result<Posynomial> {
        if let Some(m) = self.as_monomial() {
            return Ok(m.powf(r)?.into());
        }
        if r.fract() == 0.0 && r >= 1.0 && r <= u32::MAX as f64 {
            self.pow(r as u32)
        } else {
            Err(Error::NonIntegerPower(r))
        }
    }

    pub fn evaluate(&self, theta: &[f64]) -> Result<f64> {
        self.terms.iter().map(|t| t.evaluate(theta)).sum()
    }

    /// `log f(exp[z])`, max-shifted.
    pub fn log_space_eval(&self, z: &[f64]) -> f64 {
        if let Some(m) = self.as_monomial() {
            return m.log_eval(z);
        }
        let ys: Vec<f64> = self.terms.iter().map(|t| t.log_eval(z)).collect();
        log_sum_exp(&ys)
    }

    /// Gradient of [`Self::log_space_eval`] with respect to `z`; the result
    /// has the length of `z`.
    pub fn log_space_grad(&self, z: &[f64]) -> Vec<f64> {
        let ys: Vec<f64> = self.terms.iter().map(|t| t.log_eval(z)).collect();
        let mut w = Vec::new();
        softmax_into(&ys, &mut w);
        let mut g = vec![0.0; z.len()];
        for (t, wt) in self.terms.iter().zip(&w) {
            for &(id, a) in &t.exps {
                g[id.0] += wt * a;
            }
        }
        g
    }

    /// Writes `coeff * name^exp * ... + ...` using registry names.
    pub fn display<'a>(&'a self, registry: &'a VariableRegistry) -> PosyDisplay<'a> {
        PosyDisplay {
            posy: self,
            registry,
        }
    }

    /// Parses the textual form written by [`Self::display`]. Factors may be
    /// numbers, `name` or `name^exp`, joined by `*`; terms are joined by `+`.
    pub fn parse(s: &str, registry: &VariableRegistry) -> Result<Posynomial> {
        Parser::new(s, registry).parse()
    }
}

pub struct PosyDisplay<'a> {
    posy: &'a Posynomial,
    registry: &'a VariableRegistry,
}

impl fmt::Display for PosyDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.posy.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "{}", t.coeff)?;
            for &(id, a) in &t.exps {
                let name = self.registry.name(id);
                if a == 1.0 {
                    write!(f, " * {name}")?;
                } else {
                    write!(f, " * {name}^{a}")?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Star,
    Caret,
    Plus,
    Minus,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    registry: &'a VariableRegistry,
    peeked: Option<(usize, Token)>,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, registry: &'a VariableRegistry) -> Self {
        Self {
            src,
            pos: 0,
            registry,
            peeked: None,
        }
    }

    fn err<T>(&self, pos: usize, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            pos,
            msg: msg.into(),
        })
    }

    fn lex(&mut self) -> Result<Option<(usize, Token)>> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(start) else {
            return Ok(None);
        };
        let tok = match c {
            b'*' => {
                self.pos += 1;
                Token::Star
            }
            b'^' => {
                self.pos += 1;
                Token::Caret
            }
            b'+' => {
                self.pos += 1;
                Token::Plus
            }
            b'-' => {
                self.pos += 1;
                Token::Minus
            }
            c if c.is_ascii_digit() || c == b'.' => {
                let mut end = start;
                while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
                    end += 1;
                }
                if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                    let mut e = end + 1;
                    if e < bytes.len() && (bytes[e] == b'+' || bytes[e] == b'-') {
                        e += 1;
                    }
                    if e < bytes.len() && bytes[e].is_ascii_digit() {
                        while e < bytes.len() && bytes[e].is_ascii_digit() {
                            e += 1;
                        }
                        end = e;
                    }
                }
                self.pos = end;
                match self.src[start..end].parse::<f64>() {
                    Ok(v) => Token::Num(v),
                    Err(_) => return self.err(start, format!("bad number `{}`", &self.src[start..end])),
                }
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut end = start;
                while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                    end += 1;
                }
                self.pos = end;
                Token::Ident(self.src[start..end].to_string())
            }
            _ => return self.err(start, format!("unexpected character `{}`", c as char)),
        };
        Ok(Some((start, tok)))
    }

    fn peek(&mut self) -> Result<Option<&Token>> {
        if self.peeked.is_none() {
            self.peeked = self.lex()?;
        }
        Ok(self.peeked.as_ref().map(|(_, t)| t))
    }

    fn next(&mut self) -> Result<Option<(usize, Token)>> {
        match self.peeked.take() {
            Some(t) => Ok(Some(t)),
            None => self.lex(),
        }
    }

    fn parse(mut self) -> Result<Posynomial> {
        let mut terms = vec![self.term()?];
        while let Some(tok) = self.next()? {
            match tok {
                (_, Token::Plus) => terms.push(self.term()?),
                (pos, t) => return self.err(pos, format!("expected `+`, found {t:?}")),
            }
        }
        Ok(Posynomial { terms }.canonicalize())
    }

    fn term(&mut self) -> Result<Monomial> {
        let mut coeff = 1.0;
        let mut exps = Vec::new();
        loop {
            match self.next()? {
                Some((_, Token::Num(v))) => coeff *= v,
                Some((pos, Token::Ident(name))) => {
                    let Some(id) = self.registry.get(&name) else {
                        return self.err(pos, format!("unknown variable `{name}`"));
                    };
                    let mut a = 1.0;
                    if self.peek()? == Some(&Token::Caret) {
                        self.next()?;
                        let mut sign = 1.0;
                        match self.peek()? {
                            Some(Token::Minus) => {
                                sign = -1.0;
                                self.next()?;
                            }
                            Some(Token::Plus) => {
                                self.next()?;
                            }
                            _ => {}
                        }
                        match self.next()? {
                            Some((_, Token::Num(v))) => a = sign * v,
                            Some((pos, t)) => return self.err(pos, format!("expected exponent, found {t:?}")),
                            None => return self.err(self.src.len(), "expected exponent"),
                        }
                    }
                    exps.push((id, a));
                }
                Some((pos, Token::Minus)) => return self.err(pos, "negative coefficients are not allowed"),
                Some((pos, t)) => return self.err(pos, format!("expected factor, found {t:?}")),
                None => return self.err(self.src.len(), "expected factor"),
            }
            if self.peek()? == Some(&Token::Star) {
                self.next()?;
            } else {
                break;
            }
        }
        Monomial::new(coeff, exps)
    }
}
