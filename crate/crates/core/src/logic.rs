//! Monadic second-order logic over words with the chord relation.
//!
//! Formulas are evaluated directly on a word model: first-order quantifiers
//! range over positions `0..=n+1` (the delimiters included), second-order
//! quantifiers over subsets encoded as bitmasks.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::DELIM;
use crate::opm::OpMatrix;
use crate::parser::{parse_max, ChordSet, Reject};

/// Default bound on the word length for second-order quantification.
pub const MSO_BOUND: usize = 12;

/// A position term: a variable with an offset, a constant, or the right delimiter.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Term {
    Var(String, i64),
    Const(usize),
    End,
}

impl Term {
    pub fn var(x: &str) -> Term {
        Term::Var(x.to_string(), 0)
    }

    pub fn plus(x: &str, k: i64) -> Term {
        Term::Var(x.to_string(), k)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(x, 0) => write!(f, "{x}"),
            Term::Var(x, k) if *k > 0 => write!(f, "{x}+{k}"),
            Term::Var(x, k) => write!(f, "{x}-{}", -k),
            Term::Const(c) => write!(f, "{c}"),
            Term::End => write!(f, "$"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Formula {
    True,
    False,
    Pred(String, Term),
    In(Term, String),
    Less(Term, Term),
    Leq(Term, Term),
    Eq(Term, Term),
    Succ(Term, Term),
    Chord(Term, Term),
    /// Regular-control predicate: the letters strictly between the two positions
    /// form a word of the named control language (attached to the model).
    Control(String, Term, Term),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    ExistsFirst(String, Box<Formula>),
    ForallFirst(String, Box<Formula>),
    ExistsSecond(String, Box<Formula>),
    ForallSecond(String, Box<Formula>),
}

pub fn pred(c: &str, x: Term) -> Formula {
    Formula::Pred(c.to_string(), x)
}

pub fn less(x: Term, y: Term) -> Formula {
    Formula::Less(x, y)
}

pub fn leq(x: Term, y: Term) -> Formula {
    Formula::Leq(x, y)
}

pub fn succ(x: Term, y: Term) -> Formula {
    Formula::Succ(x, y)
}

pub fn chord(x: Term, y: Term) -> Formula {
    Formula::Chord(x, y)
}

pub fn eq(x: Term, y: Term) -> Formula {
    Formula::Eq(x, y)
}

pub fn in_set(x: Term, s: &str) -> Formula {
    Formula::In(x, s.to_string())
}

#[allow(clippy::should_implement_trait)]
pub fn not(f: Formula) -> Formula {
    match f {
        Formula::True => Formula::False,
        Formula::False => Formula::True,
        Formula::Not(g) => *g,
        g => Formula::Not(Box::new(g)),
    }
}

/// Conjunction, flattening nested conjunctions and folding constants.
pub fn and_all(fs: Vec<Formula>) -> Formula {
    let mut out = Vec::new();
    for f in fs {
        match f {
            Formula::True => {}
            Formula::False => return Formula::False,
            Formula::And(gs) => out.extend(gs),
            g => out.push(g),
        }
    }
    match out.len() {
        0 => Formula::True,
        1 => out.pop().unwrap(),
        _ => Formula::And(out),
    }
}

/// Disjunction, flattening nested disjunctions and folding constants.
pub fn or_all(fs: Vec<Formula>) -> Formula {
    let mut out = Vec::new();
    for f in fs {
        match f {
            Formula::False => {}
            Formula::True => return Formula::True,
            Formula::Or(gs) => out.extend(gs),
            g => out.push(g),
        }
    }
    match out.len() {
        0 => Formula::False,
        1 => out.pop().unwrap(),
        _ => Formula::Or(out),
    }
}

pub fn and(a: Formula, b: Formula) -> Formula {
    and_all(vec![a, b])
}

pub fn or(a: Formula, b: Formula) -> Formula {
    or_all(vec![a, b])
}

pub fn implies(a: Formula, b: Formula) -> Formula {
    Formula::Implies(Box::new(a), Box::new(b))
}

pub fn exists(x: &str, f: Formula) -> Formula {
    Formula::ExistsFirst(x.to_string(), Box::new(f))
}

pub fn forall(x: &str, f: Formula) -> Formula {
    Formula::ForallFirst(x.to_string(), Box::new(f))
}

pub fn exists_set(x: &str, f: Formula) -> Formula {
    Formula::ExistsSecond(x.to_string(), Box::new(f))
}

pub fn forall_set(x: &str, f: Formula) -> Formula {
    Formula::ForallSecond(x.to_string(), Box::new(f))
}

impl Formula {
    /// No second-order quantifier or membership atom.
    pub fn is_first_order(&self) -> bool {
        match self {
            Formula::In(..) | Formula::ExistsSecond(..) | Formula::ForallSecond(..) => false,
            Formula::Not(f) | Formula::ExistsFirst(_, f) | Formula::ForallFirst(_, f) => f.is_first_order(),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().all(|f| f.is_first_order()),
            Formula::Implies(a, b) => a.is_first_order() && b.is_first_order(),
            _ => true,
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Formula::Not(f) | Formula::ExistsFirst(_, f) | Formula::ForallFirst(_, f) => 1 + f.size(),
            Formula::ExistsSecond(_, f) | Formula::ForallSecond(_, f) => 1 + f.size(),
            Formula::And(fs) | Formula::Or(fs) => 1 + fs.iter().map(|f| f.size()).sum::<usize>(),
            Formula::Implies(a, b) => 1 + a.size() + b.size(),
            _ => 1,
        }
    }

    /// Replaces free occurrences of first-order variable `x` by `t`.
    pub fn substitute(&self, x: &str, t: &Term) -> Formula {
        let st = |u: &Term| match u {
            Term::Var(v, k) if v == x => match t {
                Term::Var(w, j) => Term::Var(w.clone(), j + k),
                Term::Const(c) if *k >= 0 || (*c as i64) >= -k => Term::Const((*c as i64 + k) as usize),
                other if *k == 0 => other.clone(),
                _ => panic!("cannot offset a non-variable term"),
            },
            other => other.clone(),
        };
        match self {
            Formula::True | Formula::False => self.clone(),
            Formula::Pred(c, a) => Formula::Pred(c.clone(), st(a)),
            Formula::In(a, s) => Formula::In(st(a), s.clone()),
            Formula::Less(a, b) => Formula::Less(st(a), st(b)),
            Formula::Leq(a, b) => Formula::Leq(st(a), st(b)),
            Formula::Eq(a, b) => Formula::Eq(st(a), st(b)),
            Formula::Succ(a, b) => Formula::Succ(st(a), st(b)),
            Formula::Chord(a, b) => Formula::Chord(st(a), st(b)),
            Formula::Control(r, a, b) => Formula::Control(r.clone(), st(a), st(b)),
            Formula::Not(f) => Formula::Not(Box::new(f.substitute(x, t))),
            Formula::And(fs) => Formula::And(fs.iter().map(|f| f.substitute(x, t)).collect()),
            Formula::Or(fs) => Formula::Or(fs.iter().map(|f| f.substitute(x, t)).collect()),
            Formula::Implies(a, b) => Formula::Implies(Box::new(a.substitute(x, t)), Box::new(b.substitute(x, t))),
            Formula::ExistsFirst(v, _) | Formula::ForallFirst(v, _) if v == x => self.clone(),
            Formula::ExistsFirst(v, f) => Formula::ExistsFirst(v.clone(), Box::new(f.substitute(x, t))),
            Formula::ForallFirst(v, f) => Formula::ForallFirst(v.clone(), Box::new(f.substitute(x, t))),
            Formula::ExistsSecond(v, f) => Formula::ExistsSecond(v.clone(), Box::new(f.substitute(x, t))),
            Formula::ForallSecond(v, f) => Formula::ForallSecond(v.clone(), Box::new(f.substitute(x, t))),
        }
    }
}

fn fmt_list(f: &mut fmt::Formatter<'_>, fs: &[Formula], op: &str, unit: &str) -> fmt::Result {
    if fs.is_empty() {
        return f.write_str(unit);
    }
    f.write_str("(")?;
    for (k, g) in fs.iter().enumerate() {
        if k > 0 {
            write!(f, " {op} ")?;
        }
        write!(f, "{g}")?;
    }
    f.write_str(")")
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => f.write_str("true"),
            Formula::False => f.write_str("false"),
            Formula::Pred(c, x) => write!(f, "{c}({x})"),
            Formula::In(x, s) => write!(f, "{x} in {s}"),
            Formula::Less(x, y) => write!(f, "{x}<{y}"),
            Formula::Leq(x, y) => write!(f, "{x}<={y}"),
            Formula::Eq(x, y) => write!(f, "{x}={y}"),
            Formula::Succ(x, y) => write!(f, "{x}+1={y}"),
            Formula::Chord(x, y) => write!(f, "{x}->{y}"),
            Formula::Control(r, x, y) => write!(f, "phi_{r}({x},{y})"),
            Formula::Not(g) => write!(f, "!{g}"),
            Formula::And(fs) => fmt_list(f, fs, "&", "true"),
            Formula::Or(fs) => fmt_list(f, fs, "|", "false"),
            Formula::Implies(a, b) => write!(f, "({a} => {b})"),
            Formula::ExistsFirst(x, g) => write!(f, "(Ex {x} . {g})"),
            Formula::ForallFirst(x, g) => write!(f, "(All {x} . {g})"),
            Formula::ExistsSecond(x, g) => write!(f, "(EX {x} . {g})"),
            Formula::ForallSecond(x, g) => write!(f, "(AX {x} . {g})"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LogicError {
    #[error("string is not compatible with the matrix: {0}")]
    IncompatibleString(Reject),
    #[error("word of length {len} exceeds the second-order bound {bound}")]
    WordTooLongForMso { len: usize, bound: usize },
    #[error("unbound variable '{0}'")]
    UnboundVariable(String),
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("the empty word has no positions to interpret")]
    EmptyWord,
    #[error("no control language '{0}' attached to the model")]
    UnknownControl(String),
}

/// A delimited word with its chord relation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordModel {
    /// Symbols at positions `0..=n+1`, delimiters included.
    pub symbols: Vec<String>,
    chord: Vec<bool>,
    control: BTreeMap<String, Vec<bool>>,
}

impl WordModel {
    /// Parses `w` with `m` to obtain the chords.
    pub fn new<S: AsRef<str>>(w: &[S], m: &OpMatrix) -> Result<WordModel, LogicError> {
        if w.is_empty() {
            return Err(LogicError::EmptyWord);
        }
        let t = parse_max(w, m).map_err(LogicError::IncompatibleString)?;
        Ok(WordModel::from_chords(w, &t.chords()))
    }

    pub fn from_chords<S: AsRef<str>>(w: &[S], chords: &ChordSet) -> WordModel {
        let mut symbols = vec![DELIM.to_string()];
        symbols.extend(w.iter().map(|s| s.as_ref().to_string()));
        symbols.push(DELIM.to_string());
        let size = symbols.len();
        let mut chord = vec![false; size * size];
        for &(x, y) in chords {
            chord[x * size + y] = true;
        }
        WordModel { symbols, chord, control: BTreeMap::new() }
    }

    /// Attaches the control predicate `name`, tabulated for all position pairs.
    pub fn attach_control(&mut self, name: &str, holds: impl Fn(usize, usize) -> bool) {
        let s = self.symbols.len();
        let mut t = vec![false; s * s];
        for x in 0..s {
            for y in x + 1..s {
                t[x * s + y] = holds(x, y);
            }
        }
        self.control.insert(name.to_string(), t);
    }

    pub fn control(&self, name: &str, x: usize, y: usize) -> Option<bool> {
        let s = self.symbols.len();
        let t = self.control.get(name)?;
        Some(x < s && y < s && t[x * s + y])
    }

    /// Word length without delimiters.
    pub fn len(&self) -> usize {
        self.symbols.len() - 2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_chord(&self, x: usize, y: usize) -> bool {
        let s = self.symbols.len();
        x < s && y < s && self.chord[x * s + y]
    }

    pub fn chords(&self) -> ChordSet {
        let s = self.symbols.len();
        (0..s).flat_map(|x| (0..s).map(move |y| (x, y))).filter(|&(x, y)| self.chord[x * s + y]).collect()
    }
}

#[derive(Clone, Copy, Debug)]
enum Base {
    Slot(usize),
    Const(usize),
    End,
}

#[derive(Clone, Copy, Debug)]
struct CTerm {
    base: Base,
    off: i64,
}

#[derive(Clone, Debug)]
enum Restrict {
    /// slot + off == term
    Fix(i64, CTerm),
    /// slot > term
    After(CTerm),
    /// slot < term
    Before(CTerm),
    /// term -> slot
    ChordFrom(CTerm),
    /// slot -> term
    ChordTo(CTerm),
}

#[derive(Clone, Debug)]
enum C {
    True,
    False,
    Pred(usize, CTerm),
    In(CTerm, usize),
    Less(CTerm, CTerm),
    Leq(CTerm, CTerm),
    Eq(CTerm, CTerm),
    Succ(CTerm, CTerm),
    Chord(CTerm, CTerm),
    Control(usize, CTerm, CTerm),
    Not(Box<C>),
    And(Vec<C>),
    Or(Vec<C>),
    Exists(usize, Vec<Restrict>, Box<C>),
    Forall(usize, Vec<Restrict>, Box<C>),
    ExistsSet(usize, Box<C>),
    ForallSet(usize, Box<C>),
}

/// A formula compiled to slot-indexed variables.
#[derive(Clone, Debug)]
pub struct Compiled {
    code: C,
    symbols: Vec<String>,
    controls: Vec<String>,
    first_slots: usize,
    second_slots: usize,
    free_first: Vec<(String, usize)>,
    free_second: Vec<(String, usize)>,
    first_order: bool,
}

struct Compiler {
    symbols: Vec<String>,
    controls: Vec<String>,
    first: Vec<(String, usize)>,
    second: Vec<(String, usize)>,
    next_first: usize,
    next_second: usize,
    free_first: Vec<(String, usize)>,
    free_second: Vec<(String, usize)>,
}

impl Compiler {
    fn sym(&mut self, c: &str) -> usize {
        match self.symbols.iter().position(|s| s == c) {
            Some(i) => i,
            None => {
                self.symbols.push(c.to_string());
                self.symbols.len() - 1
            }
        }
    }

    fn first_slot(&mut self, x: &str) -> usize {
        if let Some((_, s)) = self.first.iter().rev().find(|(v, _)| v == x) {
            return *s;
        }
        if let Some((_, s)) = self.free_first.iter().find(|(v, _)| v == x) {
            return *s;
        }
        let s = self.next_first;
        self.next_first += 1;
        self.free_first.push((x.to_string(), s));
        s
    }

    fn second_slot(&mut self, x: &str) -> usize {
        if let Some((_, s)) = self.second.iter().rev().find(|(v, _)| v == x) {
            return *s;
        }
        if let Some((_, s)) = self.free_second.iter().find(|(v, _)| v == x) {
            return *s;
        }
        let s = self.next_second;
        self.next_second += 1;
        self.free_second.push((x.to_string(), s));
        s
    }

    fn term(&mut self, t: &Term) -> CTerm {
        match t {
            Term::Var(x, k) => CTerm { base: Base::Slot(self.first_slot(x)), off: *k },
            Term::Const(c) => CTerm { base: Base::Const(*c), off: 0 },
            Term::End => CTerm { base: Base::End, off: 0 },
        }
    }

    fn compile(&mut self, f: &Formula) -> C {
        match f {
            Formula::True => C::True,
            Formula::False => C::False,
            Formula::Pred(c, x) => {
                let s = self.sym(c);
                C::Pred(s, self.term(x))
            }
            Formula::In(x, s) => {
                let t = self.term(x);
                C::In(t, self.second_slot(s))
            }
            Formula::Less(a, b) => C::Less(self.term(a), self.term(b)),
            Formula::Leq(a, b) => C::Leq(self.term(a), self.term(b)),
            Formula::Eq(a, b) => C::Eq(self.term(a), self.term(b)),
            Formula::Succ(a, b) => C::Succ(self.term(a), self.term(b)),
            Formula::Chord(a, b) => C::Chord(self.term(a), self.term(b)),
            Formula::Control(r, a, b) => {
                let k = match self.controls.iter().position(|c| c == r) {
                    Some(k) => k,
                    None => {
                        self.controls.push(r.clone());
                        self.controls.len() - 1
                    }
                };
                C::Control(k, self.term(a), self.term(b))
            }
            Formula::Not(g) => C::Not(Box::new(self.compile(g))),
            Formula::And(fs) => C::And(fs.iter().map(|g| self.compile(g)).collect()),
            Formula::Or(fs) => C::Or(fs.iter().map(|g| self.compile(g)).collect()),
            Formula::Implies(a, b) => {
                let na = C::Not(Box::new(self.compile(a)));
                C::Or(vec![na, self.compile(b)])
            }
            Formula::ExistsFirst(x, g) | Formula::ForallFirst(x, g) => {
                let slot = self.next_first;
                self.next_first += 1;
                self.first.push((x.clone(), slot));
                let body = self.compile(g);
                self.first.pop();
                if matches!(f, Formula::ExistsFirst(..)) {
                    let r = restrictions(slot, &body, false);
                    C::Exists(slot, r, Box::new(body))
                } else {
                    let r = restrictions(slot, &body, true);
                    C::Forall(slot, r, Box::new(body))
                }
            }
            Formula::ExistsSecond(x, g) | Formula::ForallSecond(x, g) => {
                let slot = self.next_second;
                self.next_second += 1;
                self.second.push((x.clone(), slot));
                let body = self.compile(g);
                self.second.pop();
                if matches!(f, Formula::ExistsSecond(..)) {
                    C::ExistsSet(slot, Box::new(body))
                } else {
                    C::ForallSet(slot, Box::new(body))
                }
            }
        }
    }
}

fn mentions(t: &CTerm, slot: usize) -> bool {
    matches!(t.base, Base::Slot(s) if s == slot)
}

/// Range restrictions for a quantified slot, read off the atoms that every
/// witness must satisfy: conjuncts for `∃`, negated disjuncts for `∀`.
fn restrictions(slot: usize, body: &C, universal: bool) -> Vec<Restrict> {
    let mut atoms: Vec<&C> = Vec::new();
    if universal {
        let ds: Vec<&C> = match body {
            C::Or(gs) => gs.iter().collect(),
            g => vec![g],
        };
        for d in ds {
            if let C::Not(a) = d {
                match a.as_ref() {
                    C::And(gs) => atoms.extend(gs.iter()),
                    g => atoms.push(g),
                }
            }
        }
        // a universally quantified body with no guard cannot be restricted
    } else {
        match body {
            C::And(gs) => atoms.extend(gs.iter()),
            g => atoms.push(g),
        }
    }
    let mut out = Vec::new();
    for a in atoms {
        match a {
            C::Succ(x, y) if mentions(y, slot) && !mentions(x, slot) => {
                out.push(Restrict::Fix(y.off - 1, *x));
            }
            C::Succ(x, y) if mentions(x, slot) && !mentions(y, slot) => {
                out.push(Restrict::Fix(x.off + 1, *y));
            }
            C::Eq(x, y) if mentions(y, slot) && !mentions(x, slot) => out.push(Restrict::Fix(y.off, *x)),
            C::Eq(x, y) if mentions(x, slot) && !mentions(y, slot) => out.push(Restrict::Fix(x.off, *y)),
            C::Less(x, y) if mentions(y, slot) && y.off == 0 && !mentions(x, slot) => out.push(Restrict::After(*x)),
            C::Less(x, y) if mentions(x, slot) && x.off == 0 && !mentions(y, slot) => out.push(Restrict::Before(*y)),
            C::Chord(x, y) if mentions(y, slot) && y.off == 0 && !mentions(x, slot) => {
                out.push(Restrict::ChordFrom(*x))
            }
            C::Chord(x, y) if mentions(x, slot) && x.off == 0 && !mentions(y, slot) => out.push(Restrict::ChordTo(*y)),
            _ => {}
        }
    }
    out
}

struct Env<'a> {
    model: &'a WordModel,
    sym_at: Vec<usize>,
    controls: Vec<&'a [bool]>,
    first: Vec<i64>,
    second: Vec<u64>,
}

impl Env<'_> {
    fn val(&self, t: &CTerm) -> i64 {
        let b = match t.base {
            Base::Slot(s) => self.first[s],
            Base::Const(c) => c as i64,
            Base::End => (self.model.symbols.len() - 1) as i64,
        };
        b + t.off
    }

    fn in_range(&self, v: i64) -> bool {
        v >= 0 && (v as usize) < self.model.symbols.len()
    }

    fn candidates(&self, rs: &[Restrict]) -> (i64, i64, Option<Vec<i64>>) {
        let mut lo = 0i64;
        let mut hi = (self.model.symbols.len() - 1) as i64;
        let mut fixed: Option<Vec<i64>> = None;
        let size = self.model.symbols.len();
        for r in rs {
            match r {
                Restrict::Fix(off, t) => {
                    let v = self.val(t) - off;
                    fixed = Some(match fixed {
                        Some(f) => f.into_iter().filter(|&x| x == v).collect(),
                        None => vec![v],
                    });
                }
                Restrict::After(t) => lo = lo.max(self.val(t) + 1),
                Restrict::Before(t) => hi = hi.min(self.val(t) - 1),
                Restrict::ChordFrom(t) => {
                    let x = self.val(t);
                    let v: Vec<i64> = if self.in_range(x) {
                        (0..size as i64).filter(|&y| self.model.is_chord(x as usize, y as usize)).collect()
                    } else {
                        vec![]
                    };
                    fixed = Some(match fixed {
                        Some(f) => f.into_iter().filter(|x| v.contains(x)).collect(),
                        None => v,
                    });
                }
                Restrict::ChordTo(t) => {
                    let y = self.val(t);
                    let v: Vec<i64> = if self.in_range(y) {
                        (0..size as i64).filter(|&x| self.model.is_chord(x as usize, y as usize)).collect()
                    } else {
                        vec![]
                    };
                    fixed = Some(match fixed {
                        Some(f) => f.into_iter().filter(|x| v.contains(x)).collect(),
                        None => v,
                    });
                }
            }
        }
        (lo, hi, fixed)
    }

    fn quantify(&mut self, slot: usize, rs: &[Restrict], body: &C, want: bool) -> bool {
        // returns true iff some candidate makes body == want
        let (lo, hi, fixed) = self.candidates(rs);
        let saved = self.first[slot];
        let mut hit = false;
        match fixed {
            Some(vs) => {
                for v in vs {
                    if v >= lo && v <= hi && self.in_range(v) {
                        self.first[slot] = v;
                        if self.eval(body) == want {
                            hit = true;
                            break;
                        }
                    }
                }
            }
            None => {
                for v in lo..=hi {
                    self.first[slot] = v;
                    if self.eval(body) == want {
                        hit = true;
                        break;
                    }
                }
            }
        }
        self.first[slot] = saved;
        hit
    }

    fn eval(&mut self, c: &C) -> bool {
        match c {
            C::True => true,
            C::False => false,
            C::Pred(s, t) => {
                let v = self.val(t);
                self.in_range(v) && self.sym_at[v as usize] == *s
            }
            C::In(t, s) => {
                let v = self.val(t);
                self.in_range(v) && (self.second[*s] >> v) & 1 == 1
            }
            C::Less(a, b) => self.val(a) < self.val(b),
            C::Leq(a, b) => self.val(a) <= self.val(b),
            C::Eq(a, b) => self.val(a) == self.val(b),
            C::Succ(a, b) => {
                let (x, y) = (self.val(a), self.val(b));
                self.in_range(x) && self.in_range(y) && x + 1 == y
            }
            C::Chord(a, b) => {
                let (x, y) = (self.val(a), self.val(b));
                self.in_range(x) && self.in_range(y) && self.model.is_chord(x as usize, y as usize)
            }
            C::Control(k, a, b) => {
                let (x, y) = (self.val(a), self.val(b));
                let s = self.model.symbols.len();
                self.in_range(x) && self.in_range(y) && self.controls[*k][x as usize * s + y as usize]
            }
            C::Not(g) => !self.eval(g),
            C::And(gs) => gs.iter().all(|g| self.eval(g)),
            C::Or(gs) => gs.iter().any(|g| self.eval(g)),
            C::Exists(slot, rs, body) => self.quantify(*slot, rs, body, true),
            C::Forall(slot, rs, body) => !self.quantify(*slot, rs, body, false),
            C::ExistsSet(slot, body) | C::ForallSet(slot, body) => {
                let want = matches!(c, C::ExistsSet(..));
                let saved = self.second[*slot];
                let mut hit = false;
                for mask in 0..(1u64 << self.model.symbols.len()) {
                    self.second[*slot] = mask;
                    if self.eval(body) == want {
                        hit = true;
                        break;
                    }
                }
                self.second[*slot] = saved;
                if want {
                    hit
                } else {
                    !hit
                }
            }
        }
    }
}

/// Compiles a formula once for repeated evaluation.
pub fn compile(f: &Formula) -> Compiled {
    let mut c = Compiler {
        symbols: Vec::new(),
        controls: Vec::new(),
        first: Vec::new(),
        second: Vec::new(),
        next_first: 0,
        next_second: 0,
        free_first: Vec::new(),
        free_second: Vec::new(),
    };
    let code = c.compile(f);
    Compiled {
        code,
        symbols: c.symbols,
        controls: c.controls,
        first_slots: c.next_first,
        second_slots: c.next_second,
        free_first: c.free_first,
        free_second: c.free_second,
        first_order: f.is_first_order(),
    }
}

/// Variable assignment for free variables.
#[derive(Clone, Debug, Default)]
pub struct Assignment {
    pub first: BTreeMap<String, usize>,
    pub second: BTreeMap<String, Vec<usize>>,
}

impl Compiled {
    pub fn eval(&self, model: &WordModel, nu: &Assignment) -> Result<bool, LogicError> {
        self.eval_bounded(model, nu, MSO_BOUND)
    }

    pub fn eval_bounded(&self, model: &WordModel, nu: &Assignment, bound: usize) -> Result<bool, LogicError> {
        if !self.first_order && model.len() > bound {
            return Err(LogicError::WordTooLongForMso { len: model.len(), bound });
        }
        let mut first = vec![0i64; self.first_slots];
        for (x, s) in &self.free_first {
            first[*s] = *nu.first.get(x).ok_or_else(|| LogicError::UnboundVariable(x.clone()))? as i64;
        }
        let mut second = vec![0u64; self.second_slots];
        for (x, s) in &self.free_second {
            let set = nu.second.get(x).ok_or_else(|| LogicError::UnboundVariable(x.clone()))?;
            second[*s] = set.iter().fold(0u64, |m, p| m | (1 << p));
        }
        let sym_at =
            model.symbols.iter().map(|s| self.symbols.iter().position(|t| t == s).unwrap_or(usize::MAX)).collect();
        let mut controls = Vec::with_capacity(self.controls.len());
        for r in &self.controls {
            controls.push(model.control.get(r).ok_or_else(|| LogicError::UnknownControl(r.clone()))?.as_slice());
        }
        let mut env = Env { model, sym_at, controls, first, second };
        Ok(env.eval(&self.code))
    }

    /// Evaluates with first-order free variables bound to positions.
    pub fn eval_at(&self, model: &WordModel, binding: &[(&str, usize)]) -> Result<bool, LogicError> {
        let nu =
            Assignment { first: binding.iter().map(|(x, p)| (x.to_string(), *p)).collect(), second: BTreeMap::new() };
        self.eval(model, &nu)
    }
}

/// Truth of a closed formula on a model.
pub fn eval_formula(f: &Formula, model: &WordModel) -> Result<bool, LogicError> {
    compile(f).eval(model, &Assignment::default())
}

/// Parses `w` with `m` and evaluates a closed formula on it.
pub fn eval_on_word<S: AsRef<str>>(f: &Formula, w: &[S], m: &OpMatrix) -> Result<bool, LogicError> {
    let model = WordModel::new(w, m)?;
    eval_formula(f, &model)
}

/// The tree-shape condition over terminal positions `x0 < ... < x_{n+1}`.
pub fn treec(xs: &[Term]) -> Formula {
    let last = xs.len() - 1;
    let mut parts = vec![chord(xs[0].clone(), xs[last].clone())];
    for i in 0..last {
        parts.push(or(succ(xs[i].clone(), xs[i + 1].clone()), chord(xs[i].clone(), xs[i + 1].clone())));
    }
    for i in 0..last {
        for j in i + 2..last {
            parts.push(not(chord(xs[i].clone(), xs[j].clone())));
        }
    }
    and_all(parts)
}

/// Direct evaluation of the tree-shape condition.
pub fn check_treec(model: &WordModel, xs: &[usize]) -> bool {
    let last = xs.len() - 1;
    if !model.is_chord(xs[0], xs[last]) {
        return false;
    }
    for i in 0..last {
        if xs[i] + 1 != xs[i + 1] && !model.is_chord(xs[i], xs[i + 1]) {
            return false;
        }
    }
    for i in 0..last {
        for j in i + 2..last {
            if model.is_chord(xs[i], xs[j]) {
                return false;
            }
        }
    }
    true
}

/// Formula text parser.
pub fn parse_formula(src: &str) -> Result<Formula, LogicError> {
    let toks = lex(src)?;
    let mut p = FParser { toks, k: 0 };
    let f = p.implication()?;
    if p.k != p.toks.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(f)
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(usize),
    Dollar,
    LParen,
    RParen,
    Not,
    And,
    Or,
    Implies,
    Dot,
    Less,
    Leq,
    Eq,
    Arrow,
    Plus,
    Minus,
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, LogicError> {
    let cs: Vec<(usize, char)> = src.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let special = |c: char| "()!&|=<>.-+$,".contains(c) || c.is_whitespace();
    while i < cs.len() {
        let (pos, c) = cs[i];
        let next = cs.get(i + 1).map(|x| x.1);
        let (tok, len) = match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '(' => (Tok::LParen, 1),
            ')' => (Tok::RParen, 1),
            '!' | '¬' => (Tok::Not, 1),
            '&' | '∧' => (Tok::And, 1),
            '|' | '∨' => (Tok::Or, 1),
            '.' => (Tok::Dot, 1),
            '$' => (Tok::Dollar, 1),
            '+' => (Tok::Plus, 1),
            '=' if next == Some('>') => (Tok::Implies, 2),
            '=' => (Tok::Eq, 1),
            '<' if next == Some('=') => (Tok::Leq, 2),
            '<' => (Tok::Less, 1),
            '-' if next == Some('>') => (Tok::Arrow, 2),
            '-' => (Tok::Minus, 1),
            '↷' => (Tok::Arrow, 1),
            c if c.is_ascii_digit() => {
                let mut j = i;
                while j < cs.len() && cs[j].1.is_ascii_digit() {
                    j += 1;
                }
                let s: String = cs[i..j].iter().map(|x| x.1).collect();
                (Tok::Num(s.parse().unwrap()), j - i)
            }
            _ => {
                let mut j = i;
                while j < cs.len() && !special(cs[j].1) {
                    j += 1;
                }
                if j == i {
                    // '#' and other symbol characters
                    j = i + 1;
                }
                let s: String = cs[i..j].iter().map(|x| x.1).collect();
                (Tok::Ident(s), j - i)
            }
        };
        out.push((pos, tok));
        i += len;
    }
    Ok(out)
}

struct FParser {
    toks: Vec<(usize, Tok)>,
    k: usize,
}

impl FParser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.k).map(|t| &t.1)
    }

    fn err(&self, msg: &str) -> LogicError {
        let pos = self.toks.get(self.k).map(|t| t.0).unwrap_or(usize::MAX);
        LogicError::Syntax { pos, msg: msg.to_string() }
    }

    fn expect(&mut self, t: Tok) -> Result<(), LogicError> {
        if self.peek() == Some(&t) {
            self.k += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected {t:?}")))
        }
    }

    fn implication(&mut self) -> Result<Formula, LogicError> {
        let a = self.disjunction()?;
        if self.peek() == Some(&Tok::Implies) {
            self.k += 1;
            let b = self.implication()?;
            return Ok(implies(a, b));
        }
        Ok(a)
    }

    fn disjunction(&mut self) -> Result<Formula, LogicError> {
        let mut fs = vec![self.conjunction()?];
        while self.peek() == Some(&Tok::Or) {
            self.k += 1;
            fs.push(self.conjunction()?);
        }
        Ok(if fs.len() == 1 { fs.pop().unwrap() } else { Formula::Or(fs) })
    }

    fn conjunction(&mut self) -> Result<Formula, LogicError> {
        let mut fs = vec![self.unary()?];
        while self.peek() == Some(&Tok::And) {
            self.k += 1;
            fs.push(self.unary()?);
        }
        Ok(if fs.len() == 1 { fs.pop().unwrap() } else { Formula::And(fs) })
    }

    fn unary(&mut self) -> Result<Formula, LogicError> {
        match self.peek().cloned() {
            Some(Tok::Not) => {
                self.k += 1;
                Ok(Formula::Not(Box::new(self.unary()?)))
            }
            Some(Tok::LParen) => {
                self.k += 1;
                let f = self.implication()?;
                self.expect(Tok::RParen)?;
                Ok(f)
            }
            Some(Tok::Ident(q)) if matches!(q.as_str(), "Ex" | "All" | "EX" | "AX") => {
                self.k += 1;
                let Some(Tok::Ident(v)) = self.peek().cloned() else { return Err(self.err("expected a variable")) };
                self.k += 1;
                self.expect(Tok::Dot)?;
                let body = self.implication()?;
                Ok(match q.as_str() {
                    "Ex" => exists(&v, body),
                    "All" => forall(&v, body),
                    "EX" => exists_set(&v, body),
                    _ => forall_set(&v, body),
                })
            }
            Some(Tok::Ident(s)) if s == "true" => {
                self.k += 1;
                Ok(Formula::True)
            }
            Some(Tok::Ident(s)) if s == "false" => {
                self.k += 1;
                Ok(Formula::False)
            }
            Some(Tok::Ident(s)) if self.toks.get(self.k + 1).map(|t| &t.1) == Some(&Tok::LParen) => {
                self.k += 2;
                let t = self.term()?;
                self.expect(Tok::RParen)?;
                Ok(pred(&s, t))
            }
            _ => self.relation(),
        }
    }

    fn term(&mut self) -> Result<Term, LogicError> {
        let base = match self.peek().cloned() {
            Some(Tok::Num(n)) => {
                self.k += 1;
                return Ok(Term::Const(n));
            }
            Some(Tok::Dollar) => {
                self.k += 1;
                return Ok(Term::End);
            }
            Some(Tok::Ident(v)) => {
                self.k += 1;
                v
            }
            _ => return Err(self.err("expected a term")),
        };
        let mut off = 0i64;
        while let Some(t @ (Tok::Plus | Tok::Minus)) = self.peek().cloned() {
            // only treat as offset when followed by a number
            let Some((_, Tok::Num(n))) = self.toks.get(self.k + 1).cloned() else { break };
            self.k += 2;
            off += if t == Tok::Plus { n as i64 } else { -(n as i64) };
        }
        Ok(Term::Var(base, off))
    }

    fn relation(&mut self) -> Result<Formula, LogicError> {
        let a = self.term()?;
        match self.peek().cloned() {
            Some(Tok::Less) => {
                self.k += 1;
                Ok(less(a, self.term()?))
            }
            Some(Tok::Leq) => {
                self.k += 1;
                Ok(leq(a, self.term()?))
            }
            Some(Tok::Eq) => {
                self.k += 1;
                Ok(eq(a, self.term()?))
            }
            Some(Tok::Arrow) => {
                self.k += 1;
                Ok(chord(a, self.term()?))
            }
            Some(Tok::Ident(s)) if s == "in" => {
                self.k += 1;
                let Some(Tok::Ident(v)) = self.peek().cloned() else { return Err(self.err("expected a set variable")) };
                self.k += 1;
                Ok(in_set(a, &v))
            }
            _ => Err(self.err("expected a relation")),
        }
    }
}

/// The odd-aⁿbⁿ example: clauses over a matrix with a ⋖ a, a ≐ b, b ⋗ b.
pub fn example_odd_anbn() -> Formula {
    let x = || Term::var("x");
    let y = || Term::var("y");
    let x1 = || Term::plus("x", 1);
    let no_a_after_b = forall("x", implies(pred("b", x()), not(exists("y", and(less(x(), y()), pred("a", y()))))));
    let first_paired_with_last = and(
        pred("a", Term::Const(1)),
        exists("y", and_all(vec![chord(Term::Const(1), y()), pred("b", y()), pred(DELIM, Term::plus("y", 1))])),
    );
    let xor = |p: Formula, q: Formula| or(and(p.clone(), not(q.clone())), and(not(p), q));
    let parity = exists_set(
        "O",
        exists_set(
            "E",
            forall(
                "x",
                implies(
                    pred("a", x()),
                    and_all(vec![
                        xor(in_set(x(), "O"), in_set(x(), "E")),
                        implies(and_all(vec![in_set(x(), "O"), pred("a", x()), pred("a", x1())]), in_set(x1(), "E")),
                        implies(and_all(vec![in_set(x(), "E"), pred("a", x()), pred("a", x1())]), in_set(x1(), "O")),
                        in_set(Term::Const(1), "O"),
                        implies(and(pred("a", x()), pred("b", x1())), in_set(x(), "O")),
                    ]),
                ),
            ),
        ),
    );
    and_all(vec![no_a_after_b, first_paired_with_last, parity])
}
