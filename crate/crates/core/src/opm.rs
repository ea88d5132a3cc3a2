//! Operator-precedence relations and matrices.
//!
//! Cells hold sets of relations so that conflicted matrices can be inspected;
//! partial matrices are first-class and completeness is a query.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{Grammar, Sym, DELIM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rel {
    Yields,
    Equal,
    Takes,
}

impl Rel {
    pub const ALL: [Rel; 3] = [Rel::Yields, Rel::Equal, Rel::Takes];

    fn bit(self) -> u8 {
        match self {
            Rel::Yields => 1,
            Rel::Equal => 2,
            Rel::Takes => 4,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Rel::Yields => "<",
            Rel::Equal => "=",
            Rel::Takes => ">",
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Yields => "⋖",
            Rel::Equal => "≐",
            Rel::Takes => "⋗",
        }
    }

    pub fn from_token(s: &str) -> Option<Rel> {
        match s {
            "<" | "⋖" => Some(Rel::Yields),
            "=" | "≐" => Some(Rel::Equal),
            ">" | "⋗" => Some(Rel::Takes),
            _ => None,
        }
    }
}

/// A subset of {⋖, ≐, ⋗}.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelSet(u8);

impl RelSet {
    pub const EMPTY: RelSet = RelSet(0);

    pub fn single(r: Rel) -> RelSet {
        RelSet(r.bit())
    }

    pub fn contains(self, r: Rel) -> bool {
        self.0 & r.bit() != 0
    }

    pub fn insert(&mut self, r: Rel) {
        self.0 |= r.bit();
    }

    pub fn union(self, o: RelSet) -> RelSet {
        RelSet(self.0 | o.0)
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Rel> {
        Rel::ALL.into_iter().filter(move |r| self.contains(*r))
    }

    /// The relation when the set is a singleton.
    pub fn only(self) -> Option<Rel> {
        if self.len() == 1 {
            self.iter().next()
        } else {
            None
        }
    }
}

impl fmt::Display for RelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in self.iter() {
            f.write_str(r.symbol())?;
        }
        Ok(())
    }
}

/// Precedence matrix over `alphabet ∪ {#}`; index `alphabet.len()` is `#`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MatrixJson", into = "MatrixJson")]
pub struct OpMatrix {
    alphabet: Vec<String>,
    cells: Vec<RelSet>,
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    alphabet: Vec<String>,
    cells: Vec<(String, String, String)>,
}

impl From<OpMatrix> for MatrixJson {
    fn from(m: OpMatrix) -> MatrixJson {
        let mut cells = Vec::new();
        for i in 0..m.size() {
            for j in 0..m.size() {
                for r in m.cell(i, j).iter() {
                    cells.push((m.name(i).to_string(), m.name(j).to_string(), r.token().to_string()));
                }
            }
        }
        MatrixJson { alphabet: m.alphabet, cells }
    }
}

impl TryFrom<MatrixJson> for OpMatrix {
    type Error = String;

    fn try_from(j: MatrixJson) -> Result<OpMatrix, String> {
        let mut m = OpMatrix::new(j.alphabet);
        for (a, b, r) in j.cells {
            let rel = Rel::from_token(&r).ok_or_else(|| format!("unknown relation '{r}'"))?;
            m.add(&a, &b, rel).map_err(|e| e.to_string())?;
        }
        Ok(m)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OpmError {
    #[error("symbol '{0}' is not in the matrix alphabet")]
    UnknownSymbol(String),
    #[error("conflicting cells: {}", format_cells(.0))]
    Conflict(Vec<(String, String)>),
    #[error("matrices have different alphabets")]
    AlphabetMismatch,
}

fn format_cells(cells: &[(String, String)]) -> String {
    cells.iter().map(|(a, b)| format!("({a},{b})")).collect::<Vec<_>>().join(", ")
}

impl OpMatrix {
    /// An empty matrix over the given alphabet.
    pub fn new(alphabet: Vec<String>) -> OpMatrix {
        let n = alphabet.len() + 1;
        OpMatrix { alphabet, cells: vec![RelSet::EMPTY; n * n] }
    }

    /// Builds a matrix from `(a, b, token)` triples; `#` names the delimiter.
    pub fn from_cells(alphabet: &[&str], cells: &[(&str, &str, &str)]) -> Result<OpMatrix, OpmError> {
        let mut m = OpMatrix::new(alphabet.iter().map(|s| s.to_string()).collect());
        for (a, b, r) in cells {
            let rel = Rel::from_token(r).ok_or_else(|| OpmError::UnknownSymbol(r.to_string()))?;
            m.add(a, b, rel)?;
        }
        Ok(m)
    }

    /// Parses a whitespace table: header row of column symbols, then one row per symbol.
    /// Cells are `<`, `=`, `>` or `.` for empty.
    pub fn from_table(text: &str) -> Result<OpMatrix, OpmError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with("//"));
        let header: Vec<&str> = lines.next().map(|l| l.split_whitespace().collect()).unwrap_or_default();
        let alphabet: Vec<String> = header.iter().filter(|s| **s != DELIM).map(|s| s.to_string()).collect();
        let mut m = OpMatrix::new(alphabet);
        for line in lines {
            let mut it = line.split_whitespace();
            let Some(row) = it.next() else { continue };
            for (col, cell) in header.iter().zip(it) {
                for ch in cell.chars() {
                    if ch == '.' {
                        continue;
                    }
                    let rel =
                        Rel::from_token(&ch.to_string()).ok_or_else(|| OpmError::UnknownSymbol(cell.to_string()))?;
                    m.add(row, col, rel)?;
                }
            }
        }
        Ok(m)
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    /// Number of rows, including `#`.
    pub fn size(&self) -> usize {
        self.alphabet.len() + 1
    }

    pub fn delim(&self) -> usize {
        self.alphabet.len()
    }

    pub fn index(&self, s: &str) -> Option<usize> {
        if s == DELIM {
            Some(self.delim())
        } else {
            self.alphabet.iter().position(|a| a == s)
        }
    }

    pub fn name(&self, i: usize) -> &str {
        if i == self.delim() {
            DELIM
        } else {
            &self.alphabet[i]
        }
    }

    pub fn cell(&self, i: usize, j: usize) -> RelSet {
        self.cells[i * self.size() + j]
    }

    pub fn get(&self, a: &str, b: &str) -> RelSet {
        match (self.index(a), self.index(b)) {
            (Some(i), Some(j)) => self.cell(i, j),
            _ => RelSet::EMPTY,
        }
    }

    /// The single relation of a conflict-free cell.
    pub fn rel(&self, i: usize, j: usize) -> Option<Rel> {
        self.cell(i, j).only()
    }

    pub fn add_idx(&mut self, i: usize, j: usize, r: Rel) {
        let n = self.size();
        self.cells[i * n + j].insert(r);
    }

    pub fn add(&mut self, a: &str, b: &str, r: Rel) -> Result<(), OpmError> {
        let i = self.index(a).ok_or_else(|| OpmError::UnknownSymbol(a.to_string()))?;
        let j = self.index(b).ok_or_else(|| OpmError::UnknownSymbol(b.to_string()))?;
        self.add_idx(i, j, r);
        Ok(())
    }

    pub fn set_idx(&mut self, i: usize, j: usize, s: RelSet) {
        let n = self.size();
        self.cells[i * n + j] = s;
    }

    pub fn conflicts(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for i in 0..self.size() {
            for j in 0..self.size() {
                if self.cell(i, j).len() > 1 {
                    out.push((self.name(i).to_string(), self.name(j).to_string()));
                }
            }
        }
        out
    }

    pub fn is_conflict_free(&self) -> bool {
        self.cells.iter().all(|c| c.len() <= 1)
    }

    /// Every cell holds exactly one relation; `(#,#)` may be empty or `≐`.
    pub fn is_complete(&self) -> bool {
        let d = self.delim();
        (0..self.size()).all(|i| {
            (0..self.size()).all(|j| {
                let c = self.cell(i, j);
                if i == d && j == d {
                    c.is_empty() || c == RelSet::single(Rel::Equal)
                } else {
                    c.len() == 1
                }
            })
        })
    }

    /// A `≐`-cycle over the alphabet (delimiter excluded), if any.
    pub fn eq_cycle(&self) -> Option<Vec<String>> {
        let n = self.alphabet.len();
        // 0 unvisited, 1 on stack, 2 done
        let mut state = vec![0u8; n];
        let mut stack: Vec<usize> = Vec::new();
        fn dfs(m: &OpMatrix, v: usize, state: &mut [u8], stack: &mut Vec<usize>) -> Option<Vec<usize>> {
            state[v] = 1;
            stack.push(v);
            for w in 0..m.alphabet.len() {
                if !m.cell(v, w).contains(Rel::Equal) {
                    continue;
                }
                if state[w] == 1 {
                    let k = stack.iter().position(|&x| x == w).unwrap();
                    return Some(stack[k..].to_vec());
                }
                if state[w] == 0 {
                    if let Some(c) = dfs(m, w, state, stack) {
                        return Some(c);
                    }
                }
            }
            stack.pop();
            state[v] = 2;
            None
        }
        for v in 0..n {
            if state[v] == 0 {
                if let Some(c) = dfs(self, v, &mut state, &mut stack) {
                    return Some(c.into_iter().map(|i| self.alphabet[i].clone()).collect());
                }
            }
        }
        None
    }

    /// Ok when the `≐` relation over the alphabet is acyclic, else the cycle.
    pub fn check_eq_acyclic(&self) -> Result<(), Vec<String>> {
        match self.eq_cycle() {
            Some(c) => Err(c),
            None => Ok(()),
        }
    }

    /// Cell-wise inclusion.
    pub fn is_subset_of(&self, o: &OpMatrix) -> bool {
        self.alphabet == o.alphabet && self.cells.iter().zip(&o.cells).all(|(a, b)| a.union(*b) == *b)
    }

    /// Same matrix over an extended alphabet (new rows and columns empty).
    pub fn extend_alphabet(&self, alphabet: &[String]) -> OpMatrix {
        let mut all = self.alphabet.clone();
        for a in alphabet {
            if !all.contains(a) {
                all.push(a.clone());
            }
        }
        let mut m = OpMatrix::new(all);
        for i in 0..self.size() {
            for j in 0..self.size() {
                let (a, b) = (self.name(i), self.name(j));
                let (x, y) = (m.index(a).unwrap(), m.index(b).unwrap());
                m.set_idx(x, y, self.cell(i, j));
            }
        }
        m
    }

    /// Table layout: one header row, one row per symbol, `#` last.
    pub fn to_table(&self) -> String {
        let names: Vec<&str> = (0..self.size()).map(|i| self.name(i)).collect();
        let w = names.iter().map(|s| s.chars().count()).max().unwrap_or(1).max(2);
        let pad = |s: &str| format!("{s}{}", " ".repeat(w.saturating_sub(s.chars().count())));
        let mut out = pad("");
        for n in &names {
            out.push(' ');
            out.push_str(&pad(n));
        }
        out = out.trim_end().to_string();
        out.push('\n');
        for (i, name) in names.iter().enumerate() {
            let mut line = pad(name);
            for j in 0..self.size() {
                let c = self.cell(i, j);
                line.push(' ');
                line.push_str(&pad(&if c.is_empty() { ".".to_string() } else { c.to_string() }));
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for OpMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_table())
    }
}

/// Cell-wise union; fails listing every conflicting cell.
pub fn union_matrices(m1: &OpMatrix, m2: &OpMatrix) -> Result<OpMatrix, OpmError> {
    if m1.alphabet != m2.alphabet {
        return Err(OpmError::AlphabetMismatch);
    }
    let m = OpMatrix {
        alphabet: m1.alphabet.clone(),
        cells: m1.cells.iter().zip(&m2.cells).map(|(a, b)| a.union(*b)).collect(),
    };
    let c = m.conflicts();
    if c.is_empty() {
        Ok(m)
    } else {
        Err(OpmError::Conflict(c))
    }
}

/// Left and right terminal sets per nonterminal.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LRSets {
    pub left: BTreeMap<String, BTreeSet<String>>,
    pub right: BTreeMap<String, BTreeSet<String>>,
}

impl LRSets {
    pub fn left_of(&self, a: &str) -> &BTreeSet<String> {
        static EMPTY: BTreeSet<String> = BTreeSet::new();
        self.left.get(a).unwrap_or(&EMPTY)
    }

    pub fn right_of(&self, a: &str) -> &BTreeSet<String> {
        static EMPTY: BTreeSet<String> = BTreeSet::new();
        self.right.get(a).unwrap_or(&EMPTY)
    }
}

/// Least fixpoint of the left/right terminal set equations.
pub fn left_right_sets(g: &Grammar) -> LRSets {
    let mut lr = LRSets::default();
    for n in &g.nonterminals {
        lr.left.insert(n.clone(), BTreeSet::new());
        lr.right.insert(n.clone(), BTreeSet::new());
    }
    loop {
        let mut changed = false;
        for p in &g.productions {
            // leftmost terminal, or the set of a leading nonterminal
            let mut add_l: BTreeSet<String> = BTreeSet::new();
            for s in &p.rhs {
                match s {
                    Sym::T(t) => {
                        add_l.insert(t.clone());
                        break;
                    }
                    Sym::N(b) => add_l.extend(lr.left_of(b).iter().cloned()),
                }
            }
            let mut add_r: BTreeSet<String> = BTreeSet::new();
            for s in p.rhs.iter().rev() {
                match s {
                    Sym::T(t) => {
                        add_r.insert(t.clone());
                        break;
                    }
                    Sym::N(b) => add_r.extend(lr.right_of(b).iter().cloned()),
                }
            }
            let l = lr.left.entry(p.lhs.clone()).or_default();
            for t in add_l {
                changed |= l.insert(t);
            }
            let r = lr.right.entry(p.lhs.clone()).or_default();
            for t in add_r {
                changed |= r.insert(t);
            }
        }
        if !changed {
            return lr;
        }
    }
}

/// A cell with more than one relation and the productions that set each.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub row: String,
    pub col: String,
    pub witnesses: Vec<(Rel, String)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpmReport {
    pub matrix: OpMatrix,
    pub conflicts: Vec<Conflict>,
}

/// The precedence matrix of a grammar, with a conflict report.
pub fn compute_opm(g: &Grammar) -> OpmReport {
    let lr = left_right_sets(g);
    let mut m = OpMatrix::new(g.terminals.clone());
    let mut witness: BTreeMap<(usize, usize), BTreeMap<Rel, BTreeSet<String>>> = BTreeMap::new();
    let mut set = |m: &mut OpMatrix, a: &str, b: &str, r: Rel, why: String| {
        let (i, j) = (m.index(a).unwrap(), m.index(b).unwrap());
        m.add_idx(i, j, r);
        witness.entry((i, j)).or_default().entry(r).or_default().insert(why);
    };
    for p in &g.productions {
        let rhs = &p.rhs;
        for k in 0..rhs.len() {
            if let Sym::T(a) = &rhs[k] {
                // a ≐ b with at most one nonterminal in between
                if let Some(Sym::T(b)) = rhs.get(k + 1) {
                    set(&mut m, a, b, Rel::Equal, p.to_string());
                }
                if let (Some(Sym::N(_)), Some(Sym::T(b))) = (rhs.get(k + 1), rhs.get(k + 2)) {
                    set(&mut m, a, b, Rel::Equal, p.to_string());
                }
                if let Some(Sym::N(b)) = rhs.get(k + 1) {
                    for c in lr.left_of(b) {
                        set(&mut m, a, c, Rel::Yields, p.to_string());
                    }
                }
            }
            if let (Sym::N(b), Some(Sym::T(c))) = (&rhs[k], rhs.get(k + 1)) {
                for a in lr.right_of(b) {
                    set(&mut m, a, c, Rel::Takes, p.to_string());
                }
            }
        }
    }
    for s in &g.axioms {
        for c in lr.left_of(s) {
            set(&mut m, DELIM, c, Rel::Yields, format!("axiom {s}"));
        }
        for a in lr.right_of(s) {
            set(&mut m, a, DELIM, Rel::Takes, format!("axiom {s}"));
        }
    }
    let mut conflicts = Vec::new();
    for ((i, j), rels) in witness {
        if rels.len() > 1 {
            conflicts.push(Conflict {
                row: m.name(i).to_string(),
                col: m.name(j).to_string(),
                witnesses: rels.into_iter().flat_map(|(r, ps)| ps.into_iter().map(move |p| (r, p))).collect(),
            });
        }
    }
    OpmReport { matrix: m, conflicts }
}

/// Matrices used in examples and tests.
pub mod corpus {
    use super::OpMatrix;

    /// The matrix of the arithmetic-expression grammar.
    pub fn m_ae() -> OpMatrix {
        OpMatrix::from_table(
            "   +  *  e  #\n\
             +  >  <  <  >\n\
             *  >  >  <  >\n\
             e  >  >  .  >\n\
             #  <  <  <  .\n",
        )
        .unwrap()
    }

    /// Partial matrix whose maxlanguage is the Dyck language over a a' b b'.
    pub fn m_dyck() -> OpMatrix {
        OpMatrix::from_table(
            "    a  a'  b  b'  #\n\
             a   <  =   <  .   .\n\
             a'  <  >   <  >   >\n\
             b   <  .   <  =   .\n\
             b'  <  >   <  >   >\n\
             #   <  .   <  .   =\n",
        )
        .unwrap()
    }

    /// A completion of `m_dyck`.
    pub fn m_complete() -> OpMatrix {
        OpMatrix::from_table(
            "    a  a'  b  b'  #\n\
             a   <  =   <  >   >\n\
             a'  <  >   <  >   >\n\
             b   <  >   <  =   >\n\
             b'  <  >   <  >   >\n\
             #   <  <   <  <   =\n",
        )
        .unwrap()
    }

    /// Calls, returns and interrupts.
    pub fn m_int() -> OpMatrix {
        OpMatrix::from_table(
            "      call ret int #\n\
             call  <    =   >   .\n\
             ret   >    >   >   >\n\
             int   >    .   >   >\n\
             #     <    .   <   .\n",
        )
        .unwrap()
    }

    /// c ⋖ c, c ≐ a, c ≐ b, a ⋗ b, b ⋗ a, completed with ⋖ from `#` and ⋗ into `#`.
    pub fn m_cab() -> OpMatrix {
        OpMatrix::from_table(
            "   a  b  c  #\n\
             a  .  >  .  >\n\
             b  >  .  .  >\n\
             c  =  =  <  .\n\
             #  <  .  <  .\n",
        )
        .unwrap()
    }

    /// The complete matrix over {a,b,c} used for expression tests: a ⋖ a,
    /// a ≐ b, and every letter ⋗ c, so that c never occurs inside a chord.
    pub fn m_abc() -> OpMatrix {
        OpMatrix::from_table(
            "   a  b  c  #\n\
             a  <  =  >  >\n\
             b  <  >  >  >\n\
             c  <  >  >  >\n\
             #  <  <  <  =\n",
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::corpus as g;

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn lr_sets_gae() {
        let lr = left_right_sets(&g::g_ae());
        assert_eq!(lr.left_of("E"), &set(&["+", "*", "e"]));
        assert_eq!(lr.left_of("T"), &set(&["*", "e"]));
        assert_eq!(lr.left_of("F"), &set(&["e"]));
        assert_eq!(lr.right_of("E"), &set(&["+", "*", "e"]));
        assert_eq!(lr.right_of("T"), &set(&["*", "e"]));
        assert_eq!(lr.right_of("F"), &set(&["e"]));
    }

    #[test]
    fn lr_sets_single_rule() {
        let lr = left_right_sets(&Grammar::parse("axioms: A\nA -> a ;").unwrap());
        assert_eq!(lr.left_of("A"), &set(&["a"]));
        assert_eq!(lr.right_of("A"), &set(&["a"]));
    }

    #[test]
    fn lr_sets_gnl() {
        let lr = left_right_sets(&g::g_nl());
        assert_eq!(lr.left_of("A"), &set(&["a"]));
        assert_eq!(lr.left_of("B"), &set(&["b"]));
        assert_eq!(lr.right_of("A"), &set(&["c"]));
        assert_eq!(lr.right_of("B"), &set(&["c"]));
    }

    #[test]
    fn opm_gae_matches_table() {
        let r = compute_opm(&g::g_ae());
        assert!(r.conflicts.is_empty());
        assert_eq!(r.matrix, corpus::m_ae());
    }

    #[test]
    fn opm_noop_conflict_at_aa() {
        let r = compute_opm(&g::g_noop());
        let cells: Vec<(&str, &str)> = r.conflicts.iter().map(|c| (c.row.as_str(), c.col.as_str())).collect();
        assert_eq!(cells, vec![("a", "a"), ("b", "b")]);
        assert!(r.matrix.get("a", "a").contains(Rel::Equal));
        assert!(r.matrix.get("a", "a").contains(Rel::Yields));
    }

    #[test]
    fn opm_single_rule() {
        let r = compute_opm(&Grammar::parse("axioms: A\nA -> a b ;").unwrap());
        let expect = OpMatrix::from_cells(&["a", "b"], &[("a", "b", "="), ("#", "a", "<"), ("b", "#", ">")]).unwrap();
        assert_eq!(r.matrix, expect);
    }

    #[test]
    fn eq_acyclicity() {
        assert!(corpus::m_ae().check_eq_acyclic().is_ok());
        let m = OpMatrix::from_cells(&["a"], &[("a", "a", "=")]).unwrap();
        assert_eq!(m.check_eq_acyclic(), Err(vec!["a".to_string()]));
        assert!(corpus::m_int().check_eq_acyclic().is_ok());
    }

    #[test]
    fn completeness() {
        assert!(!corpus::m_ae().is_complete());
        assert!(corpus::m_complete().is_complete());
        assert!(corpus::m_abc().is_complete());
        assert!(!corpus::m_dyck().is_complete());
        assert!(corpus::m_dyck().is_subset_of(&corpus::m_complete()));
    }

    #[test]
    fn union_idempotent_and_conflicts() {
        let m = corpus::m_ae();
        assert_eq!(union_matrices(&m, &m).unwrap(), m);
        let a = OpMatrix::from_cells(&["a", "b"], &[("a", "b", "<")]).unwrap();
        let b = OpMatrix::from_cells(&["a", "b"], &[("a", "b", ">")]).unwrap();
        assert_eq!(union_matrices(&a, &b), Err(OpmError::Conflict(vec![("a".to_string(), "b".to_string())])));
    }

    #[test]
    fn union_gc_gnc_rederived() {
        let gc = compute_opm(&g::g_c()).matrix;
        let gnc = compute_opm(&g::g_nc()).matrix;
        let alpha: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let u = union_matrices(&gc.extend_alphabet(&alpha), &gnc.extend_alphabet(&alpha)).unwrap();
        for i in 0..u.size() {
            for j in 0..u.size() {
                let (a, b) = (u.name(i), u.name(j));
                assert_eq!(u.cell(i, j), gc.get(a, b).union(gnc.get(a, b)));
            }
        }
        assert_eq!(u.get("a", "a"), RelSet::single(Rel::Yields));
        assert_eq!(u.get("a", "b"), RelSet::single(Rel::Equal));
        assert_eq!(u.get("a", "c"), RelSet::single(Rel::Equal));
    }

    #[test]
    fn json_round_trip() {
        let m = corpus::m_int();
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains(r#"["call","ret","="]"#));
        let back: OpMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn table_round_trip() {
        for m in [corpus::m_ae(), corpus::m_complete(), corpus::m_int()] {
            assert_eq!(
                OpMatrix::from_table(&m.to_table().replace('⋖', "<").replace('≐', "=").replace('⋗', ">")).unwrap(),
                m
            );
        }
    }

    /// Independent re-scan: each cell relation is witnessed by a rule pattern and vice versa.
    #[test]
    fn soundness_rescan() {
        for (_, gr) in g::all() {
            let lr = left_right_sets(&gr);
            let m = compute_opm(&gr).matrix;
            let mut expect = OpMatrix::new(gr.terminals.clone());
            for p in &gr.productions {
                let syms: Vec<&Sym> = p.rhs.iter().collect();
                for x in 0..syms.len() {
                    for y in x + 1..syms.len().min(x + 3) {
                        if let (Sym::T(a), Sym::T(b)) = (syms[x], syms[y]) {
                            if y == x + 1 || syms[x + 1].is_nonterminal() {
                                expect.add(a, b, Rel::Equal).unwrap();
                            }
                        }
                    }
                    if x + 1 < syms.len() {
                        match (syms[x], syms[x + 1]) {
                            (Sym::T(a), Sym::N(b)) => {
                                lr.left_of(b).iter().for_each(|c| expect.add(a, c, Rel::Yields).unwrap())
                            }
                            (Sym::N(b), Sym::T(c)) => {
                                lr.right_of(b).iter().for_each(|a| expect.add(a, c, Rel::Takes).unwrap())
                            }
                            _ => {}
                        }
                    }
                }
            }
            for s in &gr.axioms {
                lr.left_of(s).iter().for_each(|c| expect.add("#", c, Rel::Yields).unwrap());
                lr.right_of(s).iter().for_each(|a| expect.add(a, "#", Rel::Takes).unwrap());
            }
            assert_eq!(m, expect);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn matrix() -> impl Strategy<Value = OpMatrix> {
            proptest::collection::vec(0u8..8, 9).prop_map(|cells| {
                let mut m = OpMatrix::new(vec!["a".into(), "b".into()]);
                for (k, c) in cells.into_iter().enumerate() {
                    m.set_idx(k / 3, k % 3, RelSet(c));
                }
                m
            })
        }

        fn raw_union(a: &OpMatrix, b: &OpMatrix) -> OpMatrix {
            let mut m = a.clone();
            for i in 0..3 {
                for j in 0..3 {
                    m.set_idx(i, j, a.cell(i, j).union(b.cell(i, j)));
                }
            }
            m
        }

        proptest! {
            #[test]
            fn union_commutes(a in matrix(), b in matrix()) {
                prop_assert_eq!(union_matrices(&a, &b), union_matrices(&b, &a));
            }

            #[test]
            fn union_associates(a in matrix(), b in matrix(), c in matrix()) {
                let l = union_matrices(&raw_union(&a, &b), &c).ok();
                let r = union_matrices(&a, &raw_union(&b, &c)).ok();
                prop_assert_eq!(l, r);
            }

            #[test]
            fn json_round_trips(a in matrix()) {
                let s = serde_json::to_string(&a).unwrap();
                prop_assert_eq!(serde_json::from_str::<OpMatrix>(&s).unwrap(), a);
            }
        }
    }
}
