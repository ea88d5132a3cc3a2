//! Operator-precedence expressions.
//!
//! Regular-expression operators plus the fence `a[E]b`, which matches `a x b`
//! when `x ∈ L(E)` and the flanking `a` and `b` form a chord of the word's
//! syntax tree. Membership is decided per word with a span-memoized
//! evaluator; star-free expressions can be flattened and compiled to
//! first-order formulas.

use std::cell::RefCell;
use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::grammar::DELIM;
use crate::logic::{self, Formula, Term};
use crate::opm::{OpMatrix, Rel};
use crate::parser::{parse_indices, word_indices, words_up_to};
use crate::regular::Dfa;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Ope {
    /// The empty language.
    Empty,
    Epsilon,
    Atom(String),
    /// Any single terminal.
    Any,
    Union(Box<Ope>, Box<Ope>),
    Intersection(Box<Ope>, Box<Ope>),
    Difference(Box<Ope>, Box<Ope>),
    Negation(Box<Ope>),
    Concat(Box<Ope>, Box<Ope>),
    Star(Box<Ope>),
    Plus(Box<Ope>),
    /// Borders are terminals or `#`.
    Fence(String, Box<Ope>, String),
    Delta(String, String),
    Nabla(String, String),
    Hole(String, String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OpeError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("invalid expression: {0}")]
    Invalid(String),
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("the matrix is not complete")]
    IncompleteMatrix,
    #[error("the matrix has conflicts")]
    ConflictedMatrix,
    #[error("the expression is not star-free")]
    NotStarFree,
    #[error("no unique factorization for `{0}`")]
    AmbiguousSplit(String),
    #[error("unsupported in flat normal form: {0}")]
    Unsupported(String),
}

fn bx(e: Ope) -> Box<Ope> {
    Box::new(e)
}

pub fn atom(a: &str) -> Ope {
    Ope::Atom(a.to_string())
}

pub fn union(a: Ope, b: Ope) -> Ope {
    Ope::Union(bx(a), bx(b))
}

pub fn inter(a: Ope, b: Ope) -> Ope {
    Ope::Intersection(bx(a), bx(b))
}

pub fn neg(a: Ope) -> Ope {
    Ope::Negation(bx(a))
}

/// Concatenation that drops ε factors.
pub fn cat(a: Ope, b: Ope) -> Ope {
    match (a, b) {
        (Ope::Epsilon, b) => b,
        (a, Ope::Epsilon) => a,
        (a, b) => Ope::Concat(bx(a), bx(b)),
    }
}

pub fn fence(l: &str, e: Ope, r: &str) -> Ope {
    Ope::Fence(l.to_string(), bx(e), r.to_string())
}

/// Σ* written without a star.
pub fn sigma_star() -> Ope {
    neg(Ope::Empty)
}

/// Σ⁺ written without a star.
pub fn sigma_plus() -> Ope {
    cat(Ope::Any, sigma_star())
}

fn border(x: &str) -> Ope {
    if x == DELIM {
        Ope::Epsilon
    } else {
        atom(x)
    }
}

impl Ope {
    pub fn is_star_free(&self) -> bool {
        match self {
            Ope::Star(_) | Ope::Plus(_) => false,
            Ope::Empty | Ope::Epsilon | Ope::Atom(_) | Ope::Any => true,
            Ope::Delta(..) | Ope::Nabla(..) | Ope::Hole(..) => true,
            Ope::Negation(a) | Ope::Fence(_, a, _) => a.is_star_free(),
            Ope::Union(a, b) | Ope::Intersection(a, b) | Ope::Difference(a, b) | Ope::Concat(a, b) => {
                a.is_star_free() && b.is_star_free()
            }
        }
    }

    /// No fences, primitive or derived.
    pub fn is_regular(&self) -> bool {
        match self {
            Ope::Fence(..) | Ope::Delta(..) | Ope::Nabla(..) | Ope::Hole(..) => false,
            Ope::Empty | Ope::Epsilon | Ope::Atom(_) | Ope::Any => true,
            Ope::Negation(a) | Ope::Star(a) | Ope::Plus(a) => a.is_regular(),
            Ope::Union(a, b) | Ope::Intersection(a, b) | Ope::Difference(a, b) | Ope::Concat(a, b) => {
                a.is_regular() && b.is_regular()
            }
        }
    }

    /// Replaces Δ, ∇ and hole by their definitions, with Σ⁺ = `.+` and Σ* = `.*`.
    pub fn expand(&self) -> Ope {
        self.expand_with(&Ope::Plus(bx(Ope::Any)), &Ope::Star(bx(Ope::Any)))
    }

    /// As [`Ope::expand`], keeping the result star-free.
    pub fn expand_star_free(&self) -> Ope {
        self.expand_with(&sigma_plus(), &sigma_star())
    }

    fn expand_with(&self, plus: &Ope, star: &Ope) -> Ope {
        let rec = |e: &Ope| bx(e.expand_with(plus, star));
        match self {
            Ope::Empty | Ope::Epsilon | Ope::Atom(_) | Ope::Any => self.clone(),
            Ope::Union(a, b) => Ope::Union(rec(a), rec(b)),
            Ope::Intersection(a, b) => Ope::Intersection(rec(a), rec(b)),
            Ope::Difference(a, b) => Ope::Difference(rec(a), rec(b)),
            Ope::Concat(a, b) => Ope::Concat(rec(a), rec(b)),
            Ope::Negation(a) => Ope::Negation(rec(a)),
            Ope::Star(a) => Ope::Star(rec(a)),
            Ope::Plus(a) => Ope::Plus(rec(a)),
            Ope::Fence(l, a, r) => Ope::Fence(l.clone(), rec(a), r.clone()),
            Ope::Delta(a, b) => fence(a, plus.clone(), b),
            Ope::Nabla(a, b) => {
                let env = cat(cat(border(a), plus.clone()), border(b));
                inter(neg(fence(a, plus.clone(), b)), env)
            }
            Ope::Hole(a, b) => {
                let delta = fence(a, plus.clone(), b);
                if a == DELIM {
                    neg(cat(union(atom(b), delta), star.clone()))
                } else if b == DELIM {
                    neg(cat(star.clone(), union(atom(a), delta)))
                } else {
                    neg(cat(cat(star.clone(), union(cat(atom(a), atom(b)), delta)), star.clone()))
                }
            }
        }
    }

    fn has_fence_where(&self, pred: &dyn Fn(&str, &str) -> bool) -> bool {
        match self {
            Ope::Fence(l, a, r) => pred(l, r) || a.has_fence_where(pred),
            Ope::Delta(l, r) | Ope::Nabla(l, r) | Ope::Hole(l, r) => pred(l, r),
            Ope::Empty | Ope::Epsilon | Ope::Atom(_) | Ope::Any => false,
            Ope::Negation(a) | Ope::Star(a) | Ope::Plus(a) => a.has_fence_where(pred),
            Ope::Union(a, b) | Ope::Intersection(a, b) | Ope::Difference(a, b) | Ope::Concat(a, b) => {
                a.has_fence_where(pred) || b.has_fence_where(pred)
            }
        }
    }

    /// Checks border placement and that atoms belong to `alphabet`.
    pub fn validate(&self, alphabet: &[String]) -> Result<(), OpeError> {
        let known = |x: &str, allow_delim: bool| {
            if (allow_delim && x == DELIM) || alphabet.iter().any(|s| s == x) {
                Ok(())
            } else {
                Err(OpeError::UnknownSymbol(x.to_string()))
            }
        };
        let any_delim = |l: &str, r: &str| l == DELIM || r == DELIM;
        match self {
            Ope::Empty | Ope::Epsilon | Ope::Any => Ok(()),
            Ope::Atom(a) => known(a, false),
            Ope::Fence(l, _, r) | Ope::Delta(l, r) | Ope::Nabla(l, r) | Ope::Hole(l, r) => {
                known(l, true)?;
                known(r, true)?;
                if l == DELIM && r == DELIM {
                    return Err(OpeError::Invalid("a fence cannot have `#` on both sides".into()));
                }
                if let Ope::Fence(_, body, _) = self {
                    if body.has_fence_where(&any_delim) {
                        return Err(OpeError::Invalid("`#` inside a fence body".into()));
                    }
                    body.validate(alphabet)?;
                }
                Ok(())
            }
            Ope::Negation(a) | Ope::Star(a) | Ope::Plus(a) => a.validate(alphabet),
            Ope::Concat(a, b) => {
                if a.has_fence_where(&|_, r| r == DELIM) {
                    return Err(OpeError::Invalid("a fence ending in `#` must end the word".into()));
                }
                if b.has_fence_where(&|l, _| l == DELIM) {
                    return Err(OpeError::Invalid("a fence starting with `#` must start the word".into()));
                }
                a.validate(alphabet)?;
                b.validate(alphabet)
            }
            Ope::Union(a, b) | Ope::Intersection(a, b) | Ope::Difference(a, b) => {
                a.validate(alphabet)?;
                b.validate(alphabet)
            }
        }
    }

    fn level(&self) -> u8 {
        match self {
            Ope::Union(..) => 1,
            Ope::Intersection(..) | Ope::Difference(..) => 2,
            Ope::Negation(_) => 3,
            Ope::Concat(..) => 4,
            Ope::Star(_) | Ope::Plus(_) => 5,
            _ => 6,
        }
    }

    fn write(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let paren = self.level() < min;
        if paren {
            write!(f, "(")?;
        }
        match self {
            Ope::Empty => write!(f, "empty")?,
            Ope::Epsilon => write!(f, "eps")?,
            Ope::Atom(a) => write!(f, "{a}")?,
            Ope::Any => write!(f, ".")?,
            Ope::Union(a, b) => {
                a.write(f, 1)?;
                write!(f, " | ")?;
                b.write(f, 2)?;
            }
            Ope::Intersection(a, b) | Ope::Difference(a, b) => {
                a.write(f, 2)?;
                write!(f, "{}", if matches!(self, Ope::Intersection(..)) { " & " } else { " - " })?;
                b.write(f, 3)?;
            }
            Ope::Negation(a) => {
                write!(f, "~")?;
                a.write(f, 3)?;
            }
            Ope::Concat(a, b) => {
                a.write(f, 4)?;
                write!(f, " ")?;
                b.write(f, 5)?;
            }
            Ope::Star(a) | Ope::Plus(a) => {
                a.write(f, 6)?;
                write!(f, "{}", if matches!(self, Ope::Star(_)) { "*" } else { "+" })?;
            }
            Ope::Fence(l, a, r) => {
                write!(f, "{l}[")?;
                a.write(f, 1)?;
                write!(f, "]{r}")?;
            }
            Ope::Delta(a, b) => write!(f, "delta({a},{b})")?,
            Ope::Nabla(a, b) => write!(f, "nabla({a},{b})")?,
            Ope::Hole(a, b) => write!(f, "hole({a},{b})")?,
        }
        if paren {
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Ope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, 1)
    }
}

// ---------------------------------------------------------------- parsing

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Sym(String),
    Delim,
    Kw(&'static str),
    Op(char),
}

const KEYWORDS: [&str; 5] = ["eps", "empty", "delta", "nabla", "hole"];

fn lex(text: &str, alphabet: &[String]) -> Result<Vec<(Tok, usize)>, OpeError> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < text.len() {
        let rest = &text[i..];
        let c = rest.chars().next().unwrap();
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        if "|&-~*+()[],.".contains(c) {
            out.push((Tok::Op(c), i));
            i += 1;
            continue;
        }
        if c == '#' {
            out.push((Tok::Delim, i));
            i += 1;
            continue;
        }
        let kw = KEYWORDS.iter().filter(|k| rest.starts_with(**k)).max_by_key(|k| k.len());
        let sym = alphabet.iter().filter(|s| !s.is_empty() && rest.starts_with(s.as_str())).max_by_key(|s| s.len());
        match (kw, sym) {
            (Some(k), Some(s)) if s.len() > k.len() => {
                out.push((Tok::Sym(s.clone()), i));
                i += s.len();
            }
            (Some(k), _) => {
                out.push((Tok::Kw(k), i));
                i += k.len();
            }
            (None, Some(s)) => {
                out.push((Tok::Sym(s.clone()), i));
                i += s.len();
            }
            (None, None) => {
                return Err(OpeError::Syntax { pos: i, msg: format!("unexpected `{c}`") });
            }
        }
    }
    Ok(out)
}

struct P {
    toks: Vec<(Tok, usize)>,
    at: usize,
    end: usize,
}

impl P {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.0)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.at + 1).map(|t| &t.0)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map(|t| t.1).unwrap_or(self.end)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, OpeError> {
        Err(OpeError::Syntax { pos: self.pos(), msg: msg.into() })
    }

    fn expect(&mut self, c: char) -> Result<(), OpeError> {
        if self.peek() == Some(&Tok::Op(c)) {
            self.at += 1;
            Ok(())
        } else {
            self.err(format!("expected `{c}`"))
        }
    }

    fn union(&mut self) -> Result<Ope, OpeError> {
        let mut e = self.inter()?;
        while self.peek() == Some(&Tok::Op('|')) {
            self.at += 1;
            e = union(e, self.inter()?);
        }
        Ok(e)
    }

    fn inter(&mut self) -> Result<Ope, OpeError> {
        let mut e = self.neg()?;
        loop {
            match self.peek() {
                Some(Tok::Op('&')) => {
                    self.at += 1;
                    e = inter(e, self.neg()?);
                }
                Some(Tok::Op('-')) => {
                    self.at += 1;
                    e = Ope::Difference(bx(e), bx(self.neg()?));
                }
                _ => return Ok(e),
            }
        }
    }

    fn neg(&mut self) -> Result<Ope, OpeError> {
        if self.peek() == Some(&Tok::Op('~')) {
            self.at += 1;
            return Ok(neg(self.neg()?));
        }
        self.concat()
    }

    fn starts_primary(&self) -> bool {
        matches!(
            self.peek(),
            Some(Tok::Sym(_)) | Some(Tok::Delim) | Some(Tok::Kw(_)) | Some(Tok::Op('(')) | Some(Tok::Op('.'))
        )
    }

    fn concat(&mut self) -> Result<Ope, OpeError> {
        let mut e = self.postfix()?;
        while self.starts_primary() {
            let r = self.postfix()?;
            e = Ope::Concat(bx(e), bx(r));
        }
        Ok(e)
    }

    fn postfix(&mut self) -> Result<Ope, OpeError> {
        let mut e = self.primary()?;
        loop {
            match self.peek() {
                Some(Tok::Op('*')) => {
                    self.at += 1;
                    e = Ope::Star(bx(e));
                }
                Some(Tok::Op('+')) => {
                    self.at += 1;
                    e = Ope::Plus(bx(e));
                }
                _ => return Ok(e),
            }
        }
    }

    fn border(&mut self) -> Result<String, OpeError> {
        match self.peek().cloned() {
            Some(Tok::Sym(s)) => {
                self.at += 1;
                Ok(s)
            }
            Some(Tok::Delim) => {
                self.at += 1;
                Ok(DELIM.to_string())
            }
            _ => self.err("expected a terminal or `#`"),
        }
    }

    fn primary(&mut self) -> Result<Ope, OpeError> {
        let is_fence =
            matches!(self.peek(), Some(Tok::Sym(_)) | Some(Tok::Delim)) && self.peek2() == Some(&Tok::Op('['));
        if is_fence {
            let l = self.border()?;
            self.expect('[')?;
            let body = self.union()?;
            self.expect(']')?;
            let r = self.border()?;
            return Ok(Ope::Fence(l, bx(body), r));
        }
        match self.peek().cloned() {
            Some(Tok::Sym(s)) => {
                self.at += 1;
                Ok(Ope::Atom(s))
            }
            Some(Tok::Op('.')) => {
                self.at += 1;
                Ok(Ope::Any)
            }
            Some(Tok::Op('(')) => {
                self.at += 1;
                let e = self.union()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Kw("eps")) => {
                self.at += 1;
                Ok(Ope::Epsilon)
            }
            Some(Tok::Kw("empty")) => {
                self.at += 1;
                Ok(Ope::Empty)
            }
            Some(Tok::Kw(k)) => {
                self.at += 1;
                self.expect('(')?;
                let a = self.border()?;
                self.expect(',')?;
                let b = self.border()?;
                self.expect(')')?;
                Ok(match k {
                    "delta" => Ope::Delta(a, b),
                    "nabla" => Ope::Nabla(a, b),
                    _ => Ope::Hole(a, b),
                })
            }
            Some(Tok::Delim) => self.err("`#` may only border a fence"),
            _ => self.err("expected an expression"),
        }
    }
}

/// Parses expression source over `alphabet` and validates border placement.
pub fn parse_ope(text: &str, alphabet: &[String]) -> Result<Ope, OpeError> {
    let toks = lex(text, alphabet)?;
    let mut p = P { toks, at: 0, end: text.len() };
    let e = p.union()?;
    if p.at != p.toks.len() {
        return p.err("unexpected token");
    }
    e.validate(alphabet)?;
    Ok(e)
}

// ---------------------------------------------------------------- membership

/// How a fence's structural condition is decided.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FenceRoute {
    /// Look the chord up in the parse of the whole word.
    Chord,
    /// Simulate the parser on the fenced factor alone.
    Local,
}

#[derive(Clone, Debug)]
pub struct OpeContext {
    pub matrix: OpMatrix,
    pub route: FenceRoute,
}

#[derive(Clone, Debug)]
enum K {
    Empty,
    Eps,
    Atom(usize),
    Any,
    Union(usize, usize),
    Inter(usize, usize),
    Diff(usize, usize),
    Neg(usize),
    Concat(usize, usize),
    Star(usize),
    Plus(usize),
    Fence(usize, usize, usize),
}

fn compile_into(e: &Ope, m: &OpMatrix, arena: &mut Vec<K>) -> Result<usize, OpeError> {
    let sym = |a: &str| m.index(a).ok_or_else(|| OpeError::UnknownSymbol(a.to_string()));
    let k = match e {
        Ope::Empty => K::Empty,
        Ope::Epsilon => K::Eps,
        Ope::Any => K::Any,
        Ope::Atom(a) => {
            let i = sym(a)?;
            if i == m.delim() {
                return Err(OpeError::Invalid("`#` used as an atom".into()));
            }
            K::Atom(i)
        }
        Ope::Union(a, b) => K::Union(compile_into(a, m, arena)?, compile_into(b, m, arena)?),
        Ope::Intersection(a, b) => K::Inter(compile_into(a, m, arena)?, compile_into(b, m, arena)?),
        Ope::Difference(a, b) => K::Diff(compile_into(a, m, arena)?, compile_into(b, m, arena)?),
        Ope::Concat(a, b) => K::Concat(compile_into(a, m, arena)?, compile_into(b, m, arena)?),
        Ope::Negation(a) => K::Neg(compile_into(a, m, arena)?),
        Ope::Star(a) => K::Star(compile_into(a, m, arena)?),
        Ope::Plus(a) => K::Plus(compile_into(a, m, arena)?),
        Ope::Fence(l, a, r) => K::Fence(sym(l)?, compile_into(a, m, arena)?, sym(r)?),
        Ope::Delta(..) | Ope::Nabla(..) | Ope::Hole(..) => return compile_into(&e.expand(), m, arena),
    };
    arena.push(k);
    Ok(arena.len() - 1)
}

struct Eval<'a> {
    arena: &'a [K],
    m: &'a OpMatrix,
    route: FenceRoute,
    /// Delimited word: `#`, letters, `#`.
    sym: Vec<usize>,
    chords: HashSet<(usize, usize)>,
    memo: HashMap<(usize, usize, usize), bool>,
}

impl Eval<'_> {
    fn n(&self) -> usize {
        self.sym.len() - 2
    }

    fn letter(&self, i: usize) -> usize {
        self.sym[i + 1]
    }

    /// Letters `i..j` (0-based) are in the language of node `k`.
    fn eval(&mut self, k: usize, i: usize, j: usize) -> bool {
        if let Some(&v) = self.memo.get(&(k, i, j)) {
            return v;
        }
        let v = match self.arena[k] {
            K::Empty => false,
            K::Eps => i == j,
            K::Any => j == i + 1,
            K::Atom(c) => j == i + 1 && self.letter(i) == c,
            K::Union(a, b) => self.eval(a, i, j) || self.eval(b, i, j),
            K::Inter(a, b) => self.eval(a, i, j) && self.eval(b, i, j),
            K::Diff(a, b) => self.eval(a, i, j) && !self.eval(b, i, j),
            K::Neg(a) => !self.eval(a, i, j),
            K::Concat(a, b) => (i..=j).any(|s| self.eval(a, i, s) && self.eval(b, s, j)),
            K::Star(a) => i == j || (i + 1..=j).any(|s| self.eval(a, i, s) && self.eval(k, s, j)),
            K::Plus(a) => {
                if i == j {
                    self.eval(a, i, i)
                } else {
                    (i + 1..=j).any(|s| self.eval(a, i, s) && (s == j || self.eval(k, s, j)))
                }
            }
            K::Fence(l, a, r) => self.fence(l, a, r, i, j),
        };
        self.memo.insert((k, i, j), v);
        v
    }

    fn fence(&mut self, l: usize, body: usize, r: usize, i: usize, j: usize) -> bool {
        let d = self.m.delim();
        let n = self.n();
        // Body span and the positions of the two borders in the delimited word.
        let (bi, bj, lp, rp) = if l == d {
            if i != 0 || j == 0 || self.letter(j - 1) != r {
                return false;
            }
            (0, j - 1, 0, j)
        } else if r == d {
            if j != n || j == i || self.letter(i) != l {
                return false;
            }
            (i + 1, n, i + 1, n + 1)
        } else {
            if j < i + 2 || self.letter(i) != l || self.letter(j - 1) != r {
                return false;
            }
            (i + 1, j - 1, i + 1, j)
        };
        if !self.eval(body, bi, bj) {
            return false;
        }
        if bi == bj {
            // Empty body: the borders must be siblings, except next to `#`.
            return l == d || r == d || self.m.rel(l, r) == Some(Rel::Equal);
        }
        match self.route {
            FenceRoute::Chord => self.chords.contains(&(lp, rp)),
            FenceRoute::Local => local_chord(&self.sym, lp, rp, self.m),
        }
    }
}

#[derive(Clone, Copy)]
enum Item {
    T(usize),
    N,
}

/// Runs the parser on `sym[l..=r]` starting from `sym[l]` and reports whether
/// the factor strictly between `l` and `r` reduces under `sym[l]` with
/// lookahead `sym[r]`, i.e. whether `(l, r)` is a chord.
pub fn local_chord(sym: &[usize], l: usize, r: usize, m: &OpMatrix) -> bool {
    let mut stack = vec![Item::T(sym[l])];
    let mut terms = vec![0usize];
    let mut look = l + 1;
    loop {
        if look == r && stack.len() == 2 && matches!(stack[1], Item::N) {
            return true;
        }
        let Item::T(t) = stack[*terms.last().unwrap()] else { unreachable!() };
        let b = sym[look];
        match m.rel(t, b) {
            None => return false,
            Some(Rel::Yields) | Some(Rel::Equal) => {
                if look == r {
                    return false;
                }
                terms.push(stack.len());
                stack.push(Item::T(b));
                look += 1;
            }
            Some(Rel::Takes) => {
                let mut k = terms.len() - 1;
                loop {
                    if k == 0 {
                        return false;
                    }
                    let Item::T(cur) = stack[terms[k]] else { unreachable!() };
                    let Item::T(below) = stack[terms[k - 1]] else { unreachable!() };
                    match m.rel(below, cur) {
                        Some(Rel::Equal) => k -= 1,
                        Some(Rel::Yields) => break,
                        _ => return false,
                    }
                }
                let base = terms[k - 1];
                stack.truncate(base + 1);
                terms.truncate(k);
                stack.push(Item::N);
            }
        }
    }
}

impl OpeContext {
    /// Requires a complete, conflict-free matrix.
    pub fn new(m: OpMatrix) -> Result<Self, OpeError> {
        if !m.is_conflict_free() {
            return Err(OpeError::ConflictedMatrix);
        }
        if !m.is_complete() {
            return Err(OpeError::IncompleteMatrix);
        }
        Ok(OpeContext { matrix: m, route: FenceRoute::Chord })
    }

    /// Accepts partial matrices; fences never match on words the matrix cannot parse.
    pub fn partial(m: OpMatrix) -> Result<Self, OpeError> {
        if !m.is_conflict_free() {
            return Err(OpeError::ConflictedMatrix);
        }
        Ok(OpeContext { matrix: m, route: FenceRoute::Chord })
    }

    pub fn with_route(mut self, route: FenceRoute) -> Self {
        self.route = route;
        self
    }

    pub fn alphabet(&self) -> &[String] {
        self.matrix.alphabet()
    }

    pub fn parse(&self, text: &str) -> Result<Ope, OpeError> {
        parse_ope(text, self.alphabet())
    }

    pub fn member<S: AsRef<str>>(&self, w: &[S], e: &Ope) -> Result<bool, OpeError> {
        let idx = word_indices(w, &self.matrix).map_err(|r| OpeError::UnknownSymbol(r.to_string()))?;
        let mut arena = Vec::new();
        let root = compile_into(e, &self.matrix, &mut arena)?;
        Ok(self.run(&arena, root, &idx))
    }

    fn run(&self, arena: &[K], root: usize, w: &[usize]) -> bool {
        let d = self.matrix.delim();
        let mut sym = vec![d];
        sym.extend_from_slice(w);
        sym.push(d);
        let chords = match self.route {
            FenceRoute::Chord => match parse_indices(w, &self.matrix) {
                Ok(nodes) => nodes.iter().map(|n| (n.left, n.right)).collect(),
                Err(_) => HashSet::new(),
            },
            FenceRoute::Local => HashSet::new(),
        };
        let mut ev = Eval { arena, m: &self.matrix, route: self.route, sym, chords, memo: HashMap::new() };
        ev.eval(root, 0, w.len())
    }

    /// Words of length at most `maxlen` in L(e), by length then lexicographically.
    pub fn enumerate(&self, e: &Ope, maxlen: usize) -> Result<Vec<Vec<String>>, OpeError> {
        let mut arena = Vec::new();
        let root = compile_into(e, &self.matrix, &mut arena)?;
        let mut out = Vec::new();
        for w in words_up_to(self.alphabet(), maxlen) {
            let idx = word_indices(&w, &self.matrix).expect("alphabet words");
            if self.run(&arena, root, &idx) {
                out.push(w);
            }
        }
        Ok(out)
    }

    fn nullable(&self, e: &Ope) -> Result<bool, OpeError> {
        self.member::<&str>(&[], e)
    }
}

// ---------------------------------------------------------------- regular parts

/// Automaton of a fence-free expression.
pub fn regular_dfa(e: &Ope, alphabet: &[String]) -> Result<Dfa, OpeError> {
    let al = alphabet.to_vec();
    let sym = |a: &str| alphabet.iter().position(|s| s == a).ok_or_else(|| OpeError::UnknownSymbol(a.to_string()));
    Ok(match e {
        Ope::Empty => Dfa::empty(al),
        Ope::Epsilon => Dfa::epsilon(al),
        Ope::Any => Dfa::letters(al, |_| true),
        Ope::Atom(a) => Dfa::word(al, &[sym(a)?]),
        Ope::Union(a, b) => regular_dfa(a, alphabet)?.union(&regular_dfa(b, alphabet)?),
        Ope::Intersection(a, b) => regular_dfa(a, alphabet)?.intersect(&regular_dfa(b, alphabet)?),
        Ope::Difference(a, b) => regular_dfa(a, alphabet)?.difference(&regular_dfa(b, alphabet)?),
        Ope::Negation(a) => regular_dfa(a, alphabet)?.complement(),
        Ope::Concat(a, b) => regular_dfa(a, alphabet)?.concat(&regular_dfa(b, alphabet)?),
        Ope::Star(a) => regular_dfa(a, alphabet)?.star(),
        Ope::Plus(a) => regular_dfa(a, alphabet)?.plus(),
        _ => return Err(OpeError::Invalid(format!("`{e}` is not regular"))),
    })
}

/// Whether some word splits as `u·t·v'` with `u ∈ a1`, `ut ∈ a2`, `t ≠ ε`,
/// `tv' ∈ b1` and `v' ∈ b2`: two different cut points of one word.
fn split_conflict(a1: &Dfa, a2: &Dfa, b1: &Dfa, b2: &Dfa) -> bool {
    let k = a1.alphabet.len();
    // States of a2 after words of a1.
    let mut seen = HashSet::new();
    let mut stack = vec![(a1.initial, a2.initial)];
    seen.insert(stack[0]);
    let mut mid = HashSet::new();
    while let Some((p, q)) = stack.pop() {
        if a1.accepting[p] {
            mid.insert(q);
        }
        for c in 0..k {
            let t = (a1.trans[p][c], a2.trans[q][c]);
            if seen.insert(t) {
                stack.push(t);
            }
        }
    }
    // Pairs (r, s) of b1 × b2 with a common accepted continuation.
    let (n1, n2) = (b1.size(), b2.size());
    let mut rev = vec![Vec::new(); n1 * n2];
    for r in 0..n1 {
        for s in 0..n2 {
            for c in 0..k {
                rev[b1.trans[r][c] * n2 + b2.trans[s][c]].push(r * n2 + s);
            }
        }
    }
    let mut good = vec![false; n1 * n2];
    let mut stack: Vec<usize> = (0..n1 * n2).filter(|&x| b1.accepting[x / n2] && b2.accepting[x % n2]).collect();
    for &x in &stack {
        good[x] = true;
    }
    while let Some(x) = stack.pop() {
        for &y in &rev[x] {
            if !good[y] {
                good[y] = true;
                stack.push(y);
            }
        }
    }
    // Read t ≠ ε in a2 (from a mid state) and b1 (from its start).
    let mut seen = HashSet::new();
    let mut queue: Vec<(usize, usize)> = Vec::new();
    for &q in &mid {
        for c in 0..k {
            let t = (a2.trans[q][c], b1.trans[b1.initial][c]);
            if seen.insert(t) {
                queue.push(t);
            }
        }
    }
    while let Some((q, r)) = queue.pop() {
        if a2.accepting[q] && good[r * n2 + b2.initial] {
            return true;
        }
        for c in 0..k {
            let t = (a2.trans[q][c], b1.trans[r][c]);
            if seen.insert(t) {
                queue.push(t);
            }
        }
    }
    false
}

fn unique_concat(a: &Dfa, b: &Dfa) -> bool {
    !split_conflict(a, a, b, b)
}

// ---------------------------------------------------------------- flat normal form

/// `L·a∘b·R` with `∘` ∈ {Δ, ∇}; a `#` border stands for the word boundary.
#[derive(Clone, Debug, PartialEq)]
struct St {
    l: Ope,
    a: String,
    nabla: bool,
    b: String,
    r: Ope,
}

#[derive(Clone, Debug, PartialEq)]
enum FTerm {
    Reg(Ope),
    St(St),
}

type Conj = Vec<FTerm>;
type Dnf = Vec<Conj>;

impl St {
    fn op(&self) -> Ope {
        if self.nabla {
            Ope::Nabla(self.a.clone(), self.b.clone())
        } else {
            Ope::Delta(self.a.clone(), self.b.clone())
        }
    }

    fn mid_env(&self) -> Ope {
        cat(cat(border(&self.a), sigma_plus()), border(&self.b))
    }

    fn env(&self) -> Ope {
        cat(cat(self.l.clone(), self.mid_env()), self.r.clone())
    }

    fn to_ope(&self) -> Ope {
        cat(cat(self.l.clone(), self.op()), self.r.clone())
    }
}

impl FTerm {
    fn env(&self) -> Ope {
        match self {
            FTerm::Reg(h) => h.clone(),
            FTerm::St(s) => s.env(),
        }
    }

    fn to_ope(&self) -> Ope {
        match self {
            FTerm::Reg(h) => h.clone(),
            FTerm::St(s) => s.to_ope(),
        }
    }
}

struct Flattener<'a> {
    ctx: OpeContext,
    /// Letters that every letter takes precedence over; they cannot occur
    /// inside a chord whose left end is a letter.
    sep: Vec<String>,
    alphabet: &'a [String],
    dfas: RefCell<HashMap<String, Dfa>>,
}

fn fold<T>(xs: Vec<T>, f: impl Fn(T, T) -> T) -> Option<T> {
    xs.into_iter().reduce(f)
}

impl Flattener<'_> {
    fn dfa(&self, e: &Ope) -> Result<Dfa, OpeError> {
        let key = e.to_string();
        if let Some(d) = self.dfas.borrow().get(&key) {
            return Ok(d.clone());
        }
        let d = regular_dfa(e, self.alphabet)?;
        self.dfas.borrow_mut().insert(key, d.clone());
        Ok(d)
    }

    fn nullable_reg(&self, e: &Ope) -> Result<bool, OpeError> {
        Ok(self.dfa(e)?.accepts(&[]))
    }

    fn dnf(&self, e: &Ope) -> Result<Dnf, OpeError> {
        if e.is_regular() {
            return Ok(vec![vec![FTerm::Reg(e.clone())]]);
        }
        match e {
            Ope::Star(_) | Ope::Plus(_) => Err(OpeError::NotStarFree),
            Ope::Union(a, b) => {
                let mut x = self.dnf(a)?;
                x.extend(self.dnf(b)?);
                Ok(x)
            }
            Ope::Intersection(a, b) => Ok(self.and(self.dnf(a)?, self.dnf(b)?)),
            Ope::Difference(a, b) => {
                let nb = self.negate(self.dnf(b)?)?;
                Ok(self.and(self.dnf(a)?, nb))
            }
            Ope::Negation(a) => self.negate(self.dnf(a)?),
            Ope::Concat(a, b) => {
                let (x, y) = (self.dnf(a)?, self.dnf(b)?);
                let mut out = Vec::new();
                for c in &x {
                    for d in &y {
                        if let Some(cd) = self.concat(c.clone(), d.clone())? {
                            out.push(cd);
                        }
                    }
                }
                Ok(out)
            }
            Ope::Delta(a, b) | Ope::Nabla(a, b) => Ok(vec![vec![FTerm::St(St {
                l: Ope::Epsilon,
                a: a.clone(),
                nabla: matches!(e, Ope::Nabla(..)),
                b: b.clone(),
                r: Ope::Epsilon,
            })]]),
            Ope::Hole(..) => self.dnf(&e.expand_star_free()),
            Ope::Fence(a, body, b) => {
                let delta = vec![vec![FTerm::St(St {
                    l: Ope::Epsilon,
                    a: a.clone(),
                    nabla: false,
                    b: b.clone(),
                    r: Ope::Epsilon,
                })]];
                let inner = cat(cat(border(a), body.as_ref().clone()), border(b));
                let mut out = self.and(delta, self.dnf(&inner)?);
                if self.ctx.nullable(body)? {
                    if a == DELIM || b == DELIM {
                        return Err(OpeError::Unsupported(format!("nullable body in `{e}`")));
                    }
                    let (ai, bi) = (self.ctx.matrix.index(a).unwrap(), self.ctx.matrix.index(b).unwrap());
                    if self.ctx.matrix.rel(ai, bi) == Some(Rel::Equal) {
                        out.push(vec![FTerm::Reg(cat(atom(a), atom(b)))]);
                    }
                }
                Ok(out)
            }
            _ => unreachable!("regular leaves handled above"),
        }
    }

    /// Merges the regular conjuncts of a conjunction into one, placed first.
    fn merge(&self, c: Conj) -> Conj {
        let mut regs = Vec::new();
        let mut sts = Vec::new();
        for t in c {
            match t {
                FTerm::Reg(h) => regs.push(h),
                st => sts.push(st),
            }
        }
        let mut out: Conj = fold(regs, inter).map(FTerm::Reg).into_iter().collect();
        out.extend(sts);
        out
    }

    fn and(&self, x: Dnf, y: Dnf) -> Dnf {
        let mut out = Vec::new();
        for c in &x {
            for d in &y {
                let mut cd = c.clone();
                cd.extend(d.iter().cloned());
                out.push(self.merge(cd));
            }
        }
        out
    }

    fn negate(&self, x: Dnf) -> Result<Dnf, OpeError> {
        let mut acc: Dnf = vec![vec![]];
        for c in x {
            let mut alts: Dnf = Vec::new();
            if c.is_empty() {
                alts.push(vec![FTerm::Reg(Ope::Empty)]);
            }
            for t in c {
                alts.extend(self.negate_term(t)?);
            }
            acc = self.and(acc, alts);
        }
        Ok(acc.into_iter().map(|c| if c.is_empty() { vec![FTerm::Reg(sigma_star())] } else { c }).collect())
    }

    fn negate_term(&self, t: FTerm) -> Result<Dnf, OpeError> {
        match t {
            FTerm::Reg(h) => Ok(vec![vec![FTerm::Reg(neg(h))]]),
            FTerm::St(s) => {
                let l = self.dfa(&s.l)?;
                let r = self.dfa(&s.r)?;
                let ok = unique_concat(&l, &self.dfa(&cat(s.mid_env(), s.r.clone()))?)
                    && unique_concat(&self.dfa(&cat(s.l.clone(), s.mid_env()))?, &r);
                if !ok {
                    return Err(OpeError::AmbiguousSplit(s.env().to_string()));
                }
                let env = s.env();
                let flipped = St { nabla: !s.nabla, ..s };
                Ok(vec![vec![FTerm::St(flipped)], vec![FTerm::Reg(neg(env))]])
            }
        }
    }

    /// One term followed by a regular language.
    fn append(&self, t: FTerm, h: Ope) -> Result<Option<FTerm>, OpeError> {
        Ok(match t {
            FTerm::Reg(g) => Some(FTerm::Reg(cat(g, h))),
            FTerm::St(s) if s.b == DELIM => {
                if self.nullable_reg(&h)? {
                    Some(FTerm::St(s))
                } else {
                    None
                }
            }
            FTerm::St(s) => Some(FTerm::St(St { r: cat(s.r.clone(), h), ..s })),
        })
    }

    /// A regular language followed by one term.
    fn prepend(&self, h: Ope, t: FTerm) -> Result<Option<FTerm>, OpeError> {
        Ok(match t {
            FTerm::Reg(g) => Some(FTerm::Reg(cat(h, g))),
            FTerm::St(s) if s.a == DELIM => {
                if s.nabla {
                    return Err(OpeError::Unsupported(format!("`{}` after a prefix", s.op())));
                }
                if self.nullable_reg(&h)? {
                    Some(FTerm::St(s))
                } else {
                    None
                }
            }
            FTerm::St(s) => Some(FTerm::St(St { l: cat(h, s.l.clone()), ..s })),
        })
    }

    /// Regular superset of a term, narrowed for Δ by the separator letters.
    fn tight_env(&self, t: &FTerm) -> Ope {
        match t {
            FTerm::St(s) if !s.nabla && s.a != DELIM && !self.sep.is_empty() => {
                let seps = fold(self.sep.iter().map(|z| atom(z)).collect(), union).unwrap();
                let body = inter(sigma_plus(), neg(cat(cat(sigma_star(), seps), sigma_star())));
                cat(cat(s.l.clone(), cat(cat(atom(&s.a), body), border(&s.b))), s.r.clone())
            }
            t => t.env(),
        }
    }

    fn conj_env(&self, c: &Conj) -> Ope {
        fold(c.iter().map(|t| self.tight_env(t)).collect(), inter).unwrap_or_else(sigma_star)
    }

    fn concat(&self, c: Conj, d: Conj) -> Result<Option<Conj>, OpeError> {
        let c = self.merge(c);
        let d = self.merge(d);
        if c.len() == 1 && d.len() == 1 {
            match (&c[0], &d[0]) {
                (t, FTerm::Reg(h)) => return Ok(self.append(t.clone(), h.clone())?.map(|t| vec![t])),
                (FTerm::Reg(h), t) => return Ok(self.prepend(h.clone(), t.clone())?.map(|t| vec![t])),
                _ => {}
            }
        }
        // (∩ t_j)·(∩ s_l) = ∩ t_j·env(D) ∩ ∩ env(C)·s_l, provided every t_j
        // (resp. s_l) cuts each word of env(C)·env(D) where env(C) (resp. env(D)) does.
        let env_c = self.conj_env(&c);
        let env_d = self.conj_env(&d);
        let (dc, dd) = (self.dfa(&env_c)?, self.dfa(&env_d)?);
        for t in &c {
            let et = self.tight_env(t);
            let dt = self.dfa(&et)?;
            if split_conflict(&dc, &dt, &dd, &dd) || split_conflict(&dt, &dc, &dd, &dd) {
                return Err(OpeError::AmbiguousSplit(cat(et, env_d.clone()).to_string()));
            }
        }
        for s in &d {
            let es = self.tight_env(s);
            let ds = self.dfa(&es)?;
            if split_conflict(&dc, &dc, &dd, &ds) || split_conflict(&dc, &dc, &ds, &dd) {
                return Err(OpeError::AmbiguousSplit(cat(env_c.clone(), es).to_string()));
            }
        }
        let mut out = Vec::new();
        for t in c {
            match self.append(t, env_d.clone())? {
                Some(t) => out.push(t),
                None => return Ok(None),
            }
        }
        for s in d {
            match self.prepend(env_c.clone(), s)? {
                Some(s) => out.push(s),
                None => return Ok(None),
            }
        }
        Ok(Some(self.merge(out)))
    }
}

fn dnf_to_ope(x: Dnf) -> Ope {
    let conjs: Vec<Ope> =
        x.into_iter().map(|c| fold(c.iter().map(FTerm::to_ope).collect(), inter).unwrap_or_else(sigma_star)).collect();
    fold(conjs, union).unwrap_or(Ope::Empty)
}

/// Rewrites a star-free expression into a union of intersections of terms
/// `H`, `L·aΔb·R` or `L·a∇b·R` with `H`, `L`, `R` regular. Negation and
/// concatenation of fenced terms are only rewritten where the factorization
/// through the regular envelope `L·a·Σ⁺·b·R` is unique; otherwise the
/// function reports [`OpeError::AmbiguousSplit`].
pub fn flat_normal_form(e: &Ope, m: &OpMatrix) -> Result<Ope, OpeError> {
    if !e.is_star_free() {
        return Err(OpeError::NotStarFree);
    }
    e.validate(m.alphabet())?;
    let n = m.alphabet().len();
    let sep =
        (0..n).filter(|&z| (0..n).all(|y| m.rel(y, z) == Some(Rel::Takes))).map(|z| m.name(z).to_string()).collect();
    let f = Flattener {
        ctx: OpeContext::partial(m.clone())?,
        sep,
        alphabet: m.alphabet(),
        dfas: RefCell::new(HashMap::new()),
    };
    Ok(dnf_to_ope(f.dnf(e)?))
}

/// Whether `e` already has the flat shape.
pub fn is_flat(e: &Ope) -> bool {
    fn term(e: &Ope) -> bool {
        if e.is_regular() {
            return true;
        }
        // L·op·R, built left-associatively, with op ∈ {Δ, ∇}.
        let mut parts = Vec::new();
        fn split(e: &Ope, out: &mut Vec<Ope>) {
            match e {
                Ope::Concat(a, b) => {
                    split(a, out);
                    split(b, out);
                }
                _ => out.push(e.clone()),
            }
        }
        split(e, &mut parts);
        let ops = parts.iter().filter(|p| matches!(p, Ope::Delta(..) | Ope::Nabla(..))).count();
        ops == 1 && parts.iter().all(|p| p.is_regular() || matches!(p, Ope::Delta(..) | Ope::Nabla(..)))
    }
    fn conj(e: &Ope) -> bool {
        match e {
            Ope::Intersection(a, b) => conj(a) && conj(b),
            _ => term(e),
        }
    }
    match e {
        Ope::Union(a, b) => is_flat(a) && is_flat(b),
        _ => conj(e),
    }
}

// ---------------------------------------------------------------- first-order translation

struct Fo {
    fresh: usize,
    m: OpMatrix,
}

/// Shifts a left-boundary term; `$` only ever occurs on the right and is
/// shifted through [`Fo::pin`].
fn t_off(t: &Term, k: i64) -> Term {
    match t {
        Term::Var(x, o) => Term::Var(x.clone(), o + k),
        Term::Const(c) => Term::Const((*c as i64 + k).max(0) as usize),
        Term::End => {
            debug_assert_eq!(k, 0, "offset on the end position");
            Term::End
        }
    }
}

impl Fo {
    fn var(&mut self) -> String {
        self.fresh += 1;
        format!("v{}", self.fresh)
    }

    /// Pins a term with a possible offset on `$` to a variable.
    fn pin(&mut self, t: &Term, k: i64, body: impl FnOnce(&mut Self, Term) -> Formula) -> Formula {
        match t {
            Term::End if k != 0 => {
                let v = self.var();
                let e = logic::eq(Term::Var(v.clone(), -k), Term::End);
                let f = body(self, Term::var(&v));
                logic::exists(&v, logic::and(e, f))
            }
            _ => body(self, t_off(t, k)),
        }
    }

    /// The factor strictly between positions `l` and `r` belongs to L(e).
    fn span(&mut self, e: &Ope, l: &Term, r: &Term) -> Formula {
        match e {
            Ope::Empty => Formula::False,
            Ope::Epsilon => logic::succ(l.clone(), r.clone()),
            Ope::Any => logic::and(
                self.pin(l, 2, |_, l2| logic::eq(l2, r.clone())),
                logic::not(logic::pred(DELIM, t_off(l, 1))),
            ),
            Ope::Atom(a) => logic::and(logic::pred(a, t_off(l, 1)), logic::eq(t_off(l, 2), r.clone())),
            Ope::Union(a, b) => logic::or(self.span(a, l, r), self.span(b, l, r)),
            Ope::Intersection(a, b) => logic::and(self.span(a, l, r), self.span(b, l, r)),
            Ope::Difference(a, b) => logic::and(self.span(a, l, r), logic::not(self.span(b, l, r))),
            Ope::Negation(a) => logic::not(self.span(a, l, r)),
            Ope::Concat(a, b) => {
                // m ranges over l..r-1 and is the last position of the left factor.
                let m = self.var();
                let mv = Term::var(&m);
                let lo = logic::leq(l.clone(), mv.clone());
                let hi = logic::less(mv.clone(), r.clone());
                let fa = self.span(a, l, &t_off(&mv, 1));
                let fb = self.span(b, &mv, r);
                logic::exists(&m, logic::and_all(vec![lo, hi, fa, fb]))
            }
            Ope::Fence(a, body, b) => {
                let eq_rel = if a != DELIM && b != DELIM {
                    let (ai, bi) = (self.m.index(a), self.m.index(b));
                    matches!((ai, bi), (Some(x), Some(y)) if self.m.rel(x, y) == Some(Rel::Equal))
                } else {
                    true
                };
                if a == DELIM {
                    // l is the left delimiter; b sits at r-1.
                    let ll = l.clone();
                    return self.pin(r, -1, |s, rb| {
                        let inner = s.span(body, &ll, &rb);
                        logic::and_all(vec![
                            logic::pred(DELIM, ll.clone()),
                            logic::pred(b, rb.clone()),
                            inner,
                            logic::or(logic::chord(ll.clone(), rb.clone()), logic::eq(t_off(&ll, 1), rb)),
                        ])
                    });
                }
                let la = t_off(l, 1);
                if b == DELIM {
                    let inner = self.span(body, &la, r);
                    return logic::and_all(vec![
                        logic::pred(DELIM, r.clone()),
                        logic::pred(a, la.clone()),
                        inner,
                        logic::or(logic::chord(la.clone(), r.clone()), logic::eq(t_off(&la, 1), r.clone())),
                    ]);
                }
                self.pin(r, -1, |s, rb| {
                    let inner = s.span(body, &la, &rb);
                    let empty = if eq_rel { logic::eq(t_off(&la, 1), rb.clone()) } else { Formula::False };
                    logic::and_all(vec![
                        logic::pred(a, la.clone()),
                        logic::pred(b, rb.clone()),
                        logic::less(la.clone(), rb.clone()),
                        inner,
                        logic::or(logic::chord(la.clone(), rb.clone()), empty),
                    ])
                })
            }
            Ope::Delta(..) | Ope::Nabla(..) | Ope::Hole(..) => self.span(&e.expand_star_free(), l, r),
            Ope::Star(_) | Ope::Plus(_) => unreachable!("checked star-free"),
        }
    }
}

/// First-order sentence defining L(e) on nonempty words, over the chord
/// structure given by `m`.
pub fn ope_to_fo(e: &Ope, m: &OpMatrix) -> Result<Formula, OpeError> {
    if !e.is_star_free() {
        return Err(OpeError::NotStarFree);
    }
    e.validate(m.alphabet())?;
    let mut fo = Fo { fresh: 0, m: m.clone() };
    Ok(fo.span(e, &Term::Const(0), &Term::End))
}

/// Expressions used in examples and tests.
pub mod corpus {
    /// Star-free expressions over {a, b, c}, read with the matrix `m_abc`;
    /// all of them have a flat normal form.
    pub fn star_free() -> Vec<(&'static str, &'static str)> {
        vec![
            ("atom", "a"),
            ("delta", "delta(a,b)"),
            ("nabla", "nabla(a,b)"),
            ("fence-any", "a[~empty]b"),
            ("fence-nonempty", "a[. (~empty)]b"),
            ("fence-no-c", "a[~((~empty) c (~empty))]b"),
            ("fence-start", "#[. (~empty)]b"),
            ("fence-end", "a[. (~empty)]#"),
            ("delta-start", "delta(#,b)"),
            ("delta-end", "delta(a,#)"),
            ("suffix", "(~empty) delta(a,b)"),
            ("prefix", "delta(a,b) (~empty)"),
            ("not-delta", "~delta(a,b)"),
            ("not-nabla", "~nabla(a,b)"),
            ("not-framed", "~(c delta(a,b))"),
            ("not-start", "~(delta(#,b) c)"),
            ("two-fences", "delta(a,b) c delta(a,b)"),
            ("both-ops", "nabla(a,b) c delta(a,b)"),
            ("conj-concat", "(delta(a,b) & ~(. . .)) c delta(a,b)"),
            ("and-or", "delta(a,b) & ~(. . .) | a b"),
            ("minus", "delta(a,b) - a a b b"),
            ("nested", "a[delta(a,b)]b"),
            ("union-fences", "delta(a,b) | delta(b,b)"),
            ("regular", "~((~empty) a a (~empty))"),
        ]
    }

    /// The hole conjunction defining the Dyck language over `m_complete`.
    pub const DYCK: &str = "hole(a,b') & hole(b,a') & hole(#,a') & hole(#,b') & hole(a,#) & hole(b,#)";

    /// Traces with a matched call/return pair, over `m_int`.
    pub const INTERRUPT: &str = ".* delta(call,ret) .*";
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{eval_formula, WordModel};
    use crate::opm::corpus as mc;
    use proptest::prelude::*;

    fn w(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn chars(s: &str) -> Vec<String> {
        s.chars().map(|c| c.to_string()).collect()
    }

    /// a ⋖ a, a ≐ b, b ⋗ everything.
    fn m_anbn() -> OpMatrix {
        OpMatrix::from_table(
            "   a  b  #\n\
             a  <  =  >\n\
             b  >  >  >\n\
             #  <  <  =\n",
        )
        .unwrap()
    }

    #[test]
    fn parse_precedence_and_display() {
        let al = chars("ab");
        let e = parse_ope("a[a* b*]b", &al).unwrap();
        assert_eq!(e, fence("a", cat(Ope::Star(bx(atom("a"))), Ope::Star(bx(atom("b")))), "b"));
        let e = parse_ope("~a b | a & b - a", &al).unwrap();
        assert_eq!(
            e,
            union(neg(cat(atom("a"), atom("b"))), Ope::Difference(bx(inter(atom("a"), atom("b"))), bx(atom("a"))))
        );
        assert_eq!(parse_ope(&e.to_string(), &al).unwrap(), e);
        assert_eq!(parse_ope("delta(a,b)", &al).unwrap().expand(), fence("a", Ope::Plus(bx(Ope::Any)), "b"));
        assert!(matches!(parse_ope("#[a]#", &al), Err(OpeError::Invalid(_))));
        assert!(matches!(parse_ope("a[#[a]b]b", &al), Err(OpeError::Invalid(_))));
        assert!(parse_ope("a a[a]#", &al).is_ok());
        assert!(matches!(parse_ope("a[a]# a", &al), Err(OpeError::Invalid(_))));
        assert!(matches!(parse_ope("a (", &al), Err(OpeError::Syntax { pos: 3, .. })));
        assert!(matches!(parse_ope("a x", &al), Err(OpeError::Syntax { pos: 2, .. })));
        let al2 = w("call ret int");
        assert_eq!(parse_ope("callret", &al2).unwrap(), cat(atom("call"), atom("ret")));
    }

    #[test]
    fn anbn_fences() {
        let ctx = OpeContext::new(m_anbn()).unwrap();
        let e = ctx.parse("a[a* b*]b").unwrap();
        let got: Vec<String> = ctx.enumerate(&e, 8).unwrap().iter().map(|w| w.concat()).collect();
        assert_eq!(got, vec!["ab", "aabb", "aaabbb", "aaaabbbb"]);
        assert!(ctx.member(&chars("aabb"), &e).unwrap());
        assert!(!ctx.member(&chars("aab"), &e).unwrap());
        let e = ctx.parse("a[a* b*]#").unwrap();
        for x in ctx.enumerate(&e, 7).unwrap() {
            let na = x.iter().filter(|c| *c == "a").count();
            let s = x.concat();
            assert!(s.starts_with('a') && na > x.len() - na && !s.contains("ba"), "{s}");
        }
        assert!(ctx.member(&chars("aab"), &e).unwrap());
        assert!(!ctx.member(&chars("ab"), &e).unwrap());
        let all = words_up_to(ctx.alphabet(), 7);
        let expect = all
            .iter()
            .filter(|x| {
                let s = x.concat();
                let na = s.find('b').unwrap_or(s.len());
                !s[na..].contains('a') && na > s.len() - na
            })
            .count();
        assert_eq!(ctx.enumerate(&e, 7).unwrap().len(), expect);
    }

    fn dyck(x: &[String]) -> bool {
        let mut st = Vec::new();
        for c in x {
            match c.as_str() {
                "a" | "b" => st.push(c.clone()),
                "a'" => {
                    if st.pop().as_deref() != Some("a") {
                        return false;
                    }
                }
                _ => {
                    if st.pop().as_deref() != Some("b") {
                        return false;
                    }
                }
            }
        }
        st.is_empty()
    }

    #[test]
    fn dyck_by_holes() {
        let ctx = OpeContext::new(mc::m_complete()).unwrap();
        let e = ctx.parse(corpus::DYCK).unwrap();
        for x in words_up_to(ctx.alphabet(), 6) {
            assert_eq!(ctx.member(&x, &e).unwrap(), dyck(&x), "{x:?}");
        }
    }

    /// Some call is answered by a ret with a nonempty, interrupt-free,
    /// balanced run strictly between them.
    fn matched_pair(x: &[String]) -> bool {
        let balanced = |y: &[String]| {
            let mut depth = 0i32;
            for c in y {
                match c.as_str() {
                    "call" => depth += 1,
                    "ret" if depth > 0 => depth -= 1,
                    _ => return false,
                }
            }
            depth == 0
        };
        (0..x.len()).any(|i| (i + 2..x.len()).any(|j| x[i] == "call" && x[j] == "ret" && balanced(&x[i + 1..j])))
    }

    #[test]
    fn interrupt_traces() {
        let ctx = OpeContext::partial(mc::m_int()).unwrap();
        assert_eq!(OpeContext::new(mc::m_int()).unwrap_err(), OpeError::IncompleteMatrix);
        let e = ctx.parse(corpus::INTERRUPT).unwrap();
        assert!(ctx.member(&w("call call call ret ret call int"), &e).unwrap());
        // Δ needs a nonempty body: an immediately returning call is not enough.
        assert!(!ctx.member(&w("call call ret call call int"), &e).unwrap());
        assert!(!ctx.member(&w("call call int"), &e).unwrap());
        assert!(!ctx.member(&w("call int ret"), &e).unwrap());
        for x in words_up_to(ctx.alphabet(), 6) {
            if parse_indices(&word_indices(&x, &ctx.matrix).unwrap(), &ctx.matrix).is_ok() {
                assert_eq!(ctx.member(&x, &e).unwrap(), matched_pair(&x), "{x:?}");
            }
        }
    }

    fn abc_ctx() -> OpeContext {
        OpeContext::new(mc::m_abc()).unwrap()
    }

    #[test]
    fn negation_flips() {
        let ctx = abc_ctx();
        for (_, src) in corpus::star_free() {
            let e = ctx.parse(src).unwrap();
            let ne = neg(e.clone());
            for x in words_up_to(ctx.alphabet(), 4) {
                assert_eq!(ctx.member(&x, &e).unwrap(), !ctx.member(&x, &ne).unwrap());
            }
        }
    }

    #[test]
    fn corpus_is_star_free_and_valid() {
        let ctx = abc_ctx();
        assert!(corpus::star_free().len() >= 20);
        for (_, src) in corpus::star_free() {
            let e = ctx.parse(src).unwrap();
            assert!(e.is_star_free(), "{src}");
        }
    }

    #[test]
    fn flat_normal_form_preserves_language() {
        let ctx = abc_ctx();
        let all = words_up_to(ctx.alphabet(), 7);
        for (name, src) in corpus::star_free() {
            let e = ctx.parse(src).unwrap();
            let f = flat_normal_form(&e, &ctx.matrix).unwrap_or_else(|err| panic!("{name}: {err}"));
            assert!(is_flat(&f), "{name}: {f}");
            let f2 = flat_normal_form(&f, &ctx.matrix).unwrap();
            assert_eq!(f2, f, "{name} not idempotent");
            for x in &all {
                assert_eq!(ctx.member(x, &f).unwrap(), ctx.member(x, &e).unwrap(), "{name} on {x:?}: {f}");
            }
        }
    }

    #[test]
    fn flat_normal_form_identities() {
        let m = mc::m_abc();
        let al = m.alphabet().to_vec();
        let p = |s: &str| parse_ope(s, &al).unwrap();
        // The fence identity.
        let ab = || Ope::Delta("a".into(), "b".into());
        let env = || cat(cat(atom("a"), sigma_plus()), atom("b"));
        assert_eq!(flat_normal_form(&p("a[. (~empty)]b"), &m).unwrap(), inter(env(), ab()));
        // Negated Δ.
        let f = flat_normal_form(&p("~(c delta(a,b))"), &m).unwrap();
        assert_eq!(f, union(cat(atom("c"), Ope::Nabla("a".into(), "b".into())), neg(cat(atom("c"), env()))));
        // Two fenced factors.
        let f = flat_normal_form(&p("delta(a,b) c delta(a,b)"), &m).unwrap();
        let Ope::Intersection(x, y) = &f else { panic!("{f}") };
        assert!(matches!(x.as_ref(), Ope::Concat(a, _) if **a == ab()));
        assert!(matches!(y.as_ref(), Ope::Concat(_, b) if **b == ab()));
        assert!(matches!(flat_normal_form(&p("a*"), &m), Err(OpeError::NotStarFree)));
        assert!(matches!(flat_normal_form(&p("~((~empty) delta(a,b))"), &m), Err(OpeError::AmbiguousSplit(_))));
        assert!(matches!(flat_normal_form(&p("delta(a,b) b delta(a,b)"), &m), Err(OpeError::AmbiguousSplit(_))));
    }

    #[test]
    fn split_conflicts() {
        let al = chars("ab");
        let d = |s: &str| regular_dfa(&parse_ope(s, &al).unwrap(), &al).unwrap();
        assert!(unique_concat(&d("a"), &d("~empty")));
        assert!(!unique_concat(&d("~empty"), &d("a (~empty)")));
        assert!(unique_concat(&d("a . (~empty) b"), &d("eps")));
        assert!(!unique_concat(&d("a . (~empty) b"), &d("(~empty) b")));
        assert!(unique_concat(&d("(a | b) (a | b)"), &d("b (~empty)")));
    }

    #[test]
    fn first_order_translation_agrees() {
        let ctx = abc_ctx();
        let all: Vec<Vec<String>> = words_up_to(ctx.alphabet(), 5).into_iter().filter(|x| !x.is_empty()).collect();
        for (name, src) in corpus::star_free() {
            let e = ctx.parse(src).unwrap();
            let phi = ope_to_fo(&e, &ctx.matrix).unwrap();
            assert!(phi.is_first_order());
            let c = logic::compile(&phi);
            for x in &all {
                let model = WordModel::new(x, &ctx.matrix).unwrap();
                let got = c.eval(&model, &Default::default()).unwrap();
                assert_eq!(got, ctx.member(x, &e).unwrap(), "{name} on {x:?}");
            }
        }
        let phi = ope_to_fo(&ctx.parse("a").unwrap(), &ctx.matrix).unwrap();
        let model = WordModel::new(&chars("a"), &ctx.matrix).unwrap();
        assert!(eval_formula(&phi, &model).unwrap());
        assert!(matches!(ope_to_fo(&ctx.parse("a*").unwrap(), &ctx.matrix), Err(OpeError::NotStarFree)));
    }

    fn arb_ope(depth: u32) -> BoxedStrategy<Ope> {
        let leaf = prop_oneof![
            Just(atom("a")),
            Just(atom("b")),
            Just(atom("c")),
            Just(Ope::Any),
            Just(Ope::Epsilon),
            Just(sigma_star()),
        ];
        leaf.prop_recursive(depth, 24, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| union(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| inter(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Ope::Concat(bx(a), bx(b))),
                inner.clone().prop_map(neg),
                inner.clone().prop_map(|a| Ope::Star(bx(a))),
                (prop::sample::select(vec!["a", "b", "c"]), inner.clone(), prop::sample::select(vec!["a", "b", "c"]))
                    .prop_map(|(l, e, r)| fence(l, e, r)),
            ]
        })
        .boxed()
    }

    fn arb_word(max: usize) -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a".to_string(), "b".into(), "c".into()]), 0..=max)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn display_round_trips(e in arb_ope(4)) {
            let al = chars("abc");
            prop_assert_eq!(parse_ope(&e.to_string(), &al).unwrap(), e);
        }

        #[test]
        fn fence_identity(e in arb_ope(3), x in arb_word(7), l in prop::sample::select(vec!["a", "b", "c"]), r in prop::sample::select(vec!["a", "b", "c"])) {
            let ctx = abc_ctx();
            let lhs = fence(l, e.clone(), r);
            let mut rhs = inter(Ope::Delta(l.into(), r.into()), cat(cat(atom(l), e.clone()), atom(r)));
            if ctx.matrix.get(l, r).contains(Rel::Equal) && ctx.nullable(&e).unwrap() {
                rhs = union(rhs, cat(atom(l), atom(r)));
            }
            prop_assert_eq!(ctx.member(&x, &lhs).unwrap(), ctx.member(&x, &rhs).unwrap());
        }

        #[test]
        fn fence_routes_agree(e in arb_ope(3), x in arb_word(8)) {
            let chord = abc_ctx();
            let local = abc_ctx().with_route(FenceRoute::Local);
            prop_assert_eq!(chord.member(&x, &e).unwrap(), local.member(&x, &e).unwrap());
        }

        #[test]
        fn local_chords_match_parse(x in arb_word(9).prop_filter("nonempty", |x| !x.is_empty())) {
            let m = mc::m_abc();
            let idx = word_indices(&x, &m).unwrap();
            let nodes = parse_indices(&idx, &m).unwrap();
            let set: HashSet<(usize, usize)> = nodes.iter().map(|n| (n.left, n.right)).collect();
            let mut sym = vec![m.delim()];
            sym.extend(idx.iter().copied());
            sym.push(m.delim());
            for l in 0..sym.len() {
                for r in l + 2..sym.len() {
                    prop_assert_eq!(local_chord(&sym, l, r, &m), set.contains(&(l, r)), "{:?} {} {}", x, l, r);
                }
            }
        }
    }
}
