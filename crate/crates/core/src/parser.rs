//! The structure-assigning operator-precedence parse.
//!
//! A conflict-free matrix assigns to every compatible string a unique
//! unlabeled syntax tree. Positions are numbered with `0` and `n+1` for the
//! delimiters and `1..=n` for the letters; every internal node is identified
//! by its chord, the pair of positions flanking its frontier.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{Grammar, Production, Sym, CLOSE, DELIM, OPEN};
use crate::opm::{compute_opm, OpMatrix, Rel};

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum Reject {
    #[error("no precedence relation between '{a}' and '{b}' at position {pos}")]
    NoRelation { a: String, b: String, pos: usize },
    #[error("parser stuck in configuration {0}")]
    Stuck(String),
    #[error("symbol '{0}' is not in the alphabet")]
    UnknownSymbol(String),
    #[error("matrix has conflicts")]
    Conflicted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Child {
    Leaf(usize),
    Node(usize),
}

/// An internal node: chord positions and children in order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub left: usize,
    pub right: usize,
    pub children: Vec<Child>,
}

/// Unlabeled syntax tree; nodes are in reduction order, the root is last.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseTree {
    pub word: Vec<String>,
    pub nodes: Vec<Node>,
}

pub type ChordSet = BTreeSet<(usize, usize)>;

impl ParseTree {
    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }

    /// One pair per internal node.
    pub fn chords(&self) -> ChordSet {
        self.nodes.iter().map(|n| (n.left, n.right)).collect()
    }

    /// Parenthesized string with the given markers.
    pub fn parenthesized_with(&self, open: &str, close: &str) -> String {
        let mut out = String::new();
        self.write_node(self.root(), open, close, &mut out);
        out
    }

    /// Parenthesized string using the `⦇`/`⦈` markers.
    pub fn parenthesized(&self) -> String {
        self.parenthesized_with(OPEN, CLOSE)
    }

    /// Parenthesized string as a token sequence.
    pub fn parenthesized_tokens(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.tokens_node(self.root(), &mut out);
        out
    }

    fn tokens_node(&self, id: usize, out: &mut Vec<String>) {
        out.push(OPEN.to_string());
        for c in &self.nodes[id].children {
            match c {
                Child::Leaf(p) => out.push(self.word[p - 1].clone()),
                Child::Node(k) => self.tokens_node(*k, out),
            }
        }
        out.push(CLOSE.to_string());
    }

    fn write_node(&self, id: usize, open: &str, close: &str, out: &mut String) {
        out.push_str(open);
        for c in &self.nodes[id].children {
            match c {
                Child::Leaf(p) => out.push_str(&self.word[p - 1]),
                Child::Node(k) => self.write_node(*k, open, close, out),
            }
        }
        out.push_str(close);
    }

    /// Graphviz rendering: internal nodes "N", leaves labeled by their letter.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph tree {\n  node [shape=plaintext];\n");
        for (k, n) in self.nodes.iter().enumerate() {
            out.push_str(&format!("  n{k} [label=\"N\"];\n"));
            for c in &n.children {
                match c {
                    Child::Leaf(p) => {
                        out.push_str(&format!("  l{p} [label=\"{}\"];\n  n{k} -> l{p};\n", self.word[p - 1]))
                    }
                    Child::Node(j) => out.push_str(&format!("  n{k} -> n{j};\n")),
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

impl fmt::Display for ParseTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.parenthesized())
    }
}

/// Splits text into alphabet symbols: on whitespace if present, else by greedy longest match.
pub fn tokenize(text: &str, alphabet: &[String]) -> Result<Vec<String>, Reject> {
    let text = text.trim();
    if text.contains(char::is_whitespace) {
        return Ok(text.split_whitespace().map(|s| s.to_string()).collect());
    }
    let mut out = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        let best = alphabet.iter().filter(|a| !a.is_empty() && rest.starts_with(a.as_str())).max_by_key(|a| a.len());
        match best {
            Some(a) => {
                out.push(a.clone());
                rest = &rest[a.len()..];
            }
            None => {
                let c = rest.chars().next().unwrap();
                return Err(Reject::UnknownSymbol(c.to_string()));
            }
        }
    }
    Ok(out)
}

/// Maps a word to matrix indices.
pub fn word_indices<S: AsRef<str>>(w: &[S], m: &OpMatrix) -> Result<Vec<usize>, Reject> {
    w.iter()
        .map(|s| {
            let s = s.as_ref();
            match m.index(s) {
                Some(i) if i != m.delim() => Ok(i),
                _ => Err(Reject::UnknownSymbol(s.to_string())),
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
enum Item {
    Term(usize, usize),
    Nt(usize),
}

/// Parses a word given as matrix indices (no delimiters).
pub fn parse_indices(w: &[usize], m: &OpMatrix) -> Result<Vec<Node>, Reject> {
    let n = w.len();
    let d = m.delim();
    let sym = |p: usize| if p == 0 || p == n + 1 { d } else { w[p - 1] };
    let mut stack: Vec<Item> = vec![Item::Term(0, d)];
    let mut nodes: Vec<Node> = Vec::new();
    let mut top_term: Vec<usize> = vec![0];
    let mut look = 1;
    loop {
        let ti = *top_term.last().unwrap();
        let Item::Term(tpos, t) = stack[ti] else { unreachable!() };
        let b = sym(look);
        if t == d && b == d && look == n + 1 {
            if stack.len() == 2 && matches!(stack[1], Item::Nt(_)) {
                return Ok(nodes);
            }
            return Err(Reject::Stuck(config(&stack, look, w, m)));
        }
        let cell = m.cell(t, b);
        let rel = match cell.len() {
            0 => return Err(Reject::NoRelation { a: m.name(t).to_string(), b: m.name(b).to_string(), pos: tpos }),
            1 => cell.only().unwrap(),
            _ => return Err(Reject::Conflicted),
        };
        match rel {
            Rel::Yields | Rel::Equal => {
                if look > n {
                    return Err(Reject::Stuck(config(&stack, look, w, m)));
                }
                top_term.push(stack.len());
                stack.push(Item::Term(look, b));
                look += 1;
            }
            Rel::Takes => {
                // walk down the chain of ≐ until a ⋖
                let mut k = top_term.len() - 1;
                loop {
                    if k == 0 {
                        return Err(Reject::Stuck(config(&stack, look, w, m)));
                    }
                    let Item::Term(_, cur) = stack[top_term[k]] else { unreachable!() };
                    let Item::Term(_, below) = stack[top_term[k - 1]] else { unreachable!() };
                    match m.cell(below, cur).only() {
                        Some(Rel::Equal) => k -= 1,
                        Some(Rel::Yields) => break,
                        _ => return Err(Reject::Stuck(config(&stack, look, w, m))),
                    }
                }
                let base = top_term[k - 1];
                let Item::Term(lpos, _) = stack[base] else { unreachable!() };
                let children: Vec<Child> = stack
                    .drain(base + 1..)
                    .map(|it| match it {
                        Item::Term(p, _) => Child::Leaf(p),
                        Item::Nt(id) => Child::Node(id),
                    })
                    .collect();
                top_term.truncate(k);
                nodes.push(Node { left: lpos, right: look, children });
                stack.push(Item::Nt(nodes.len() - 1));
            }
        }
    }
}

fn config(stack: &[Item], look: usize, w: &[usize], m: &OpMatrix) -> String {
    let mut s: Vec<String> = stack
        .iter()
        .map(|it| match it {
            Item::Term(_, t) => m.name(*t).to_string(),
            Item::Nt(_) => "N".to_string(),
        })
        .collect();
    s.push("|".to_string());
    for p in look..=w.len() + 1 {
        if p == w.len() + 1 {
            s.push(DELIM.to_string());
        } else {
            s.push(m.name(w[p - 1]).to_string());
        }
    }
    s.join(" ")
}

/// The unique syntax tree the matrix assigns to `w`.
pub fn parse_max<S: AsRef<str>>(w: &[S], m: &OpMatrix) -> Result<ParseTree, Reject> {
    let idx = word_indices(w, m)?;
    let nodes = parse_indices(&idx, m)?;
    Ok(ParseTree { word: w.iter().map(|s| s.as_ref().to_string()).collect(), nodes })
}

/// Chord set of a parse.
pub fn chords(t: &ParseTree) -> ChordSet {
    t.chords()
}

/// A parse with every node labeled by the set of nonterminals that can produce it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledTree {
    pub tree: ParseTree,
    pub labels: Vec<BTreeSet<String>>,
}

impl LabeledTree {
    pub fn to_labeled_string(&self) -> String {
        let mut out = String::new();
        self.write(self.tree.root(), &mut out);
        out
    }

    fn write(&self, id: usize, out: &mut String) {
        let l: Vec<&str> = self.labels[id].iter().map(|s| s.as_str()).collect();
        out.push_str(&format!("{}[", l.join("|")));
        for (k, c) in self.tree.nodes[id].children.iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            match c {
                Child::Leaf(p) => out.push_str(&self.tree.word[p - 1]),
                Child::Node(j) => self.write(*j, out),
            }
        }
        out.push(']');
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum MemberError {
    #[error("grammar is not an operator-precedence grammar: conflicts at {0:?}")]
    NotOpg(Vec<(String, String)>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Membership {
    Member(LabeledTree),
    /// Parsable by the matrix but no axiom labels the root.
    NotDerived(ParseTree),
    Rejected(Reject),
    /// The empty word, generated by an empty rule.
    EmptyWord,
}

impl Membership {
    pub fn is_member(&self) -> bool {
        matches!(self, Membership::Member(_) | Membership::EmptyWord)
    }
}

fn prod_matches(p: &Production, node: &Node, word: &[String], labels: &[BTreeSet<String>]) -> bool {
    p.rhs.len() == node.children.len()
        && p.rhs.iter().zip(&node.children).all(|(s, c)| match (s, c) {
            (Sym::T(t), Child::Leaf(pos)) => &word[pos - 1] == t,
            (Sym::N(a), Child::Node(k)) => labels[*k].contains(a),
            _ => false,
        })
}

/// Labels every node of a tree bottom-up with the matching lhs set.
pub fn label_tree(g: &Grammar, tree: ParseTree) -> LabeledTree {
    let mut labels: Vec<BTreeSet<String>> = Vec::with_capacity(tree.nodes.len());
    for node in &tree.nodes {
        let set = g
            .productions
            .iter()
            .filter(|p| prod_matches(p, node, &tree.word, &labels))
            .map(|p| p.lhs.clone())
            .collect();
        labels.push(set);
    }
    LabeledTree { tree, labels }
}

/// Grammar membership through the matrix parse and bottom-up labeling.
pub fn member_grammar<S: AsRef<str>>(w: &[S], g: &Grammar) -> Result<Membership, MemberError> {
    let opm = compute_opm(g);
    if !opm.conflicts.is_empty() {
        return Err(MemberError::NotOpg(opm.conflicts.iter().map(|c| (c.row.clone(), c.col.clone())).collect()));
    }
    if w.is_empty() {
        let has_empty = g.productions.iter().any(|p| p.rhs.is_empty() && g.is_axiom(&p.lhs));
        return Ok(if has_empty { Membership::EmptyWord } else { Membership::Rejected(Reject::Stuck("# | #".into())) });
    }
    let tree = match parse_max(w, &opm.matrix) {
        Ok(t) => t,
        Err(r) => return Ok(Membership::Rejected(r)),
    };
    let lt = label_tree(g, tree);
    if lt.labels[lt.tree.root()].iter().any(|a| g.is_axiom(a)) {
        Ok(Membership::Member(lt))
    } else {
        Ok(Membership::NotDerived(lt.tree))
    }
}

/// Membership of a parenthesized sentence (markers explicit) in the parenthesized language.
pub fn member_parenthesized<S: AsRef<str>>(pw: &[S], g: &Grammar) -> bool {
    // returns the label set of the paren node starting at `i` and the index after it
    fn node<S: AsRef<str>>(pw: &[S], g: &Grammar, i: usize) -> Option<(BTreeSet<String>, usize)> {
        if pw.get(i)?.as_ref() != OPEN {
            return None;
        }
        let mut k = i + 1;
        let mut kids: Vec<Result<String, BTreeSet<String>>> = Vec::new();
        loop {
            let s = pw.get(k)?.as_ref();
            if s == CLOSE {
                k += 1;
                break;
            } else if s == OPEN {
                let (set, next) = node(pw, g, k)?;
                kids.push(Err(set));
                k = next;
            } else {
                kids.push(Ok(s.to_string()));
                k += 1;
            }
        }
        let set = g
            .productions
            .iter()
            .filter(|p| {
                p.rhs.len() == kids.len()
                    && p.rhs.iter().zip(&kids).all(|(s, c)| match (s, c) {
                        (Sym::T(t), Ok(x)) => t == x,
                        (Sym::N(a), Err(set)) => set.contains(a),
                        _ => false,
                    })
            })
            .map(|p| p.lhs.clone())
            .collect();
        Some((set, k))
    }
    match node(pw, g, 0) {
        Some((set, end)) => end == pw.len() && set.iter().any(|a| g.is_axiom(a)),
        None => false,
    }
}

/// Whether nonterminal `a` derives `w`, by memoized span matching.
pub fn derives<S: AsRef<str>>(g: &Grammar, a: &str, w: &[S]) -> bool {
    let w: Vec<&str> = w.iter().map(|s| s.as_ref()).collect();
    let mut memo: HashMap<(String, usize, usize), bool> = HashMap::new();
    derives_span(g, a, &w, 0, w.len(), &mut memo)
}

fn derives_span(
    g: &Grammar,
    a: &str,
    w: &[&str],
    i: usize,
    j: usize,
    memo: &mut HashMap<(String, usize, usize), bool>,
) -> bool {
    let key = (a.to_string(), i, j);
    if let Some(&v) = memo.get(&key) {
        return v;
    }
    memo.insert(key.clone(), false);
    let mut found = false;
    for p in g.productions_of(a) {
        if match_rhs(g, &p.rhs, w, i, j, memo) {
            found = true;
            break;
        }
    }
    memo.insert(key, found);
    found
}

fn match_rhs(
    g: &Grammar,
    rhs: &[Sym],
    w: &[&str],
    i: usize,
    j: usize,
    memo: &mut HashMap<(String, usize, usize), bool>,
) -> bool {
    match rhs.split_first() {
        None => i == j,
        Some((Sym::T(t), rest)) => i < j && w[i] == t && match_rhs(g, rest, w, i + 1, j, memo),
        Some((Sym::N(b), rest)) => {
            let min_rest = rest.iter().filter(|s| !s.is_nonterminal()).count();
            (i + 1..=j.saturating_sub(min_rest))
                .any(|m| derives_span(g, b, w, i, m, memo) && match_rhs(g, rest, w, m, j, memo))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EnumError {
    #[error("enumeration budget of {0} strings exceeded")]
    BudgetExceeded(usize),
}

pub const DEFAULT_BUDGET: usize = 2_000_000;

/// All nonempty sentences of length at most `maxlen`, sorted by length then lexicographically.
pub fn enumerate_language(g: &Grammar, maxlen: usize, budget: usize) -> Result<Vec<Vec<String>>, EnumError> {
    let sets = enumerate_nonterminals(g, maxlen, budget)?;
    let mut all: BTreeSet<Vec<String>> = BTreeSet::new();
    for a in &g.axioms {
        if let Some(s) = sets.get(a) {
            all.extend(s.iter().cloned());
        }
    }
    let mut v: Vec<Vec<String>> = all.into_iter().collect();
    v.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    Ok(v)
}

/// Per-nonterminal bounded languages, as a least fixpoint.
pub fn enumerate_nonterminals(
    g: &Grammar,
    maxlen: usize,
    budget: usize,
) -> Result<BTreeMap<String, BTreeSet<Vec<String>>>, EnumError> {
    let mut sets: BTreeMap<String, BTreeSet<Vec<String>>> =
        g.nonterminals.iter().map(|n| (n.clone(), BTreeSet::new())).collect();
    let mut total = 0usize;
    loop {
        let mut changed = false;
        for p in &g.productions {
            if p.rhs.is_empty() {
                continue;
            }
            let min_t = p.rhs.iter().filter(|s| !s.is_nonterminal()).count();
            if min_t > maxlen {
                continue;
            }
            let mut partial: Vec<Vec<String>> = vec![Vec::new()];
            for (k, s) in p.rhs.iter().enumerate() {
                let rest_min = p.rhs.len() - k - 1;
                let mut next = Vec::new();
                match s {
                    Sym::T(t) => {
                        for mut x in partial {
                            x.push(t.clone());
                            next.push(x);
                        }
                    }
                    Sym::N(b) => {
                        let sb = &sets[b];
                        for x in &partial {
                            for y in sb {
                                if x.len() + y.len() + rest_min <= maxlen {
                                    let mut z = x.clone();
                                    z.extend(y.iter().cloned());
                                    next.push(z);
                                }
                            }
                        }
                    }
                }
                partial = next;
                if partial.is_empty() {
                    break;
                }
            }
            let target = sets.get_mut(&p.lhs).unwrap();
            for x in partial {
                if x.len() <= maxlen && target.insert(x) {
                    changed = true;
                    total += 1;
                    if total > budget {
                        return Err(EnumError::BudgetExceeded(budget));
                    }
                }
            }
        }
        if !changed {
            return Ok(sets);
        }
    }
}

/// Every word over `alpha` of length at most `maxlen`, shortest first.
pub fn words_up_to(alpha: &[String], maxlen: usize) -> Vec<Vec<String>> {
    let mut out = vec![vec![]];
    let mut frontier: Vec<Vec<String>> = vec![vec![]];
    for _ in 0..maxlen {
        let mut next = Vec::new();
        for x in &frontier {
            for a in alpha {
                let mut y = x.clone();
                y.push(a.clone());
                next.push(y);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::corpus as g;
    use crate::grammar::parenthesize_grammar;
    use crate::opm::corpus as m;

    fn w(s: &str) -> Vec<String> {
        s.chars().map(|c| c.to_string()).collect()
    }

    fn strs(v: &[Vec<String>]) -> Vec<String> {
        v.iter().map(|x| x.concat()).collect()
    }

    /// The iterated rewrite: replace every ⋖ ... ⋗ span simultaneously by N.
    fn rewrite_oracle(word: &[usize], m: &OpMatrix) -> Option<ChordSet> {
        // (is_terminal, symbol, position)
        let d = m.delim();
        let n = word.len();
        let mut s: Vec<(bool, usize)> = vec![(true, 0)];
        s.extend((1..=n).map(|p| (true, p)));
        s.push((true, n + 1));
        let sym = |p: usize| if p == 0 || p == n + 1 { d } else { word[p - 1] };
        let mut chords = ChordSet::new();
        loop {
            let terms: Vec<usize> = (0..s.len()).filter(|&k| s[k].0).collect();
            if terms.len() == 2 && s.len() == 3 {
                return Some(chords);
            }
            let rels: Vec<Option<Rel>> =
                terms.windows(2).map(|p| m.cell(sym(s[p[0]].1), sym(s[p[1]].1)).only()).collect();
            if rels.iter().any(|r| r.is_none()) {
                return None;
            }
            let mut cuts: Vec<(usize, usize)> = Vec::new();
            for (k, r) in rels.iter().enumerate() {
                if *r == Some(Rel::Yields) {
                    let mut e = k + 1;
                    while e < rels.len() && rels[e] == Some(Rel::Equal) {
                        e += 1;
                    }
                    if e < rels.len() && rels[e] == Some(Rel::Takes) {
                        cuts.push((terms[k], terms[e + 1]));
                    }
                }
            }
            if cuts.is_empty() {
                return None;
            }
            for &(l, r) in cuts.iter().rev() {
                chords.insert((s[l].1, s[r].1));
                s.splice(l + 1..r, [(false, 0)]);
            }
        }
    }

    #[test]
    fn expression_parenthesization() {
        let t = parse_max(&w("e+e*e+e"), &m::m_ae()).unwrap();
        assert_eq!(t.parenthesized(), "⦇⦇⦇e⦈+⦇⦇e⦈*⦇e⦈⦈⦈+⦇e⦈⦈");
    }

    #[test]
    fn expression_chords() {
        let t = parse_max(&w("e+e*e+e"), &m::m_ae()).unwrap();
        let expect: ChordSet = [(0, 2), (2, 4), (4, 6), (6, 8), (2, 6), (0, 6), (0, 8)].into_iter().collect();
        assert_eq!(chords(&t), expect);
    }

    #[test]
    fn plus_plus_plus() {
        let t = parse_max(&w("+++"), &m::m_ae()).unwrap();
        assert_eq!(t.parenthesized(), "⦇⦇⦇+⦈+⦈+⦈");
    }

    #[test]
    fn ee_blocked() {
        assert_eq!(parse_max(&w("ee"), &m::m_ae()), Err(Reject::NoRelation { a: "e".into(), b: "e".into(), pos: 1 }));
    }

    #[test]
    fn small_chord_sets() {
        let c = |s: &str| chords(&parse_max(&w(s), &m::m_ae()).unwrap());
        assert_eq!(c("e"), [(0, 2)].into_iter().collect());
        assert_eq!(c("e+e"), [(0, 2), (2, 4), (0, 4)].into_iter().collect());
    }

    #[test]
    fn empty_word_is_stuck() {
        assert!(matches!(parse_max::<String>(&[], &m::m_ae()), Err(Reject::Stuck(_))));
    }

    #[test]
    fn tokenize_greedy() {
        let alpha: Vec<String> = ["a", "a'", "b", "b'"].iter().map(|s| s.to_string()).collect();
        assert_eq!(tokenize("aa'bb'", &alpha).unwrap(), vec!["a", "a'", "b", "b'"]);
        assert_eq!(tokenize("call ret", &alpha).unwrap(), vec!["call", "ret"]);
        assert!(tokenize("ax", &alpha).is_err());
    }

    #[test]
    fn gae_membership() {
        assert!(member_grammar(&w("e+e*e+e"), &g::g_ae()).unwrap().is_member());
        assert!(!member_grammar(&w("+++"), &g::g_ae()).unwrap().is_member());
        assert!(!member_grammar(&w("e+e*"), &g::g_ae()).unwrap().is_member());
    }

    #[test]
    fn gc_membership() {
        assert!(member_grammar(&w("ab"), &g::g_c()).unwrap().is_member());
        assert!(!member_grammar(&w("aabb"), &g::g_c()).unwrap().is_member());
        assert!(member_grammar(&w("aaabbb"), &g::g_c()).unwrap().is_member());
    }

    #[test]
    fn noop_is_rejected_for_membership() {
        assert!(matches!(member_grammar(&w("ab"), &g::g_noop()), Err(MemberError::NotOpg(_))));
    }

    #[test]
    fn labeled_output() {
        let Membership::Member(lt) = member_grammar(&w("e*e"), &g::g_ae()).unwrap() else { panic!() };
        assert_eq!(lt.to_labeled_string(), "E|T[E|F|T[e] * E|F|T[e]]");
    }

    #[test]
    fn enumerate_gc() {
        assert_eq!(strs(&enumerate_language(&g::g_c(), 6, DEFAULT_BUDGET).unwrap()), vec!["ab", "aaabbb"]);
        assert!(enumerate_language(&g::g_c(), 0, DEFAULT_BUDGET).unwrap().is_empty());
    }

    #[test]
    fn enumerate_gnl() {
        assert_eq!(strs(&enumerate_language(&g::g_nl(), 5, DEFAULT_BUDGET).unwrap()), vec!["ac", "bc"]);
    }

    #[test]
    fn enumerate_budget() {
        assert_eq!(enumerate_language(&g::g_ae(), 9, 10), Err(EnumError::BudgetExceeded(10)));
    }

    #[test]
    fn parenthesized_gc_shape() {
        let p = parenthesize_grammar(&g::g_c());
        let sentences = enumerate_language(&p.grammar, 12, DEFAULT_BUDGET).unwrap();
        assert_eq!(strs(&sentences), vec!["⦇ab⦈", "⦇a⦇a⦇ab⦈b⦈b⦈"]);
        for s in &sentences {
            assert!(member_parenthesized(s, &g::g_c()));
        }
        assert!(!member_parenthesized(&["⦇", "a", "⦇", "a", "b", "⦈", "b", "⦈"], &g::g_c()));
    }

    /// Enumeration, derivation and parse-based membership agree on all short words.
    #[test]
    fn membership_agrees_with_enumeration() {
        for (name, gr) in g::all() {
            let maxlen = if name == "gae" { 7 } else { 8 };
            let lang: BTreeSet<Vec<String>> =
                enumerate_language(&gr, maxlen, DEFAULT_BUDGET).unwrap().into_iter().collect();
            for x in all_words(&gr.terminals, maxlen.min(6)) {
                let enum_says = lang.contains(&x);
                let by_derive = gr.axioms.iter().any(|a| derives(&gr, a, &x));
                let by_parse = member_grammar(&x, &gr).unwrap().is_member();
                assert_eq!(enum_says, by_derive, "{name} {x:?}");
                assert_eq!(enum_says, by_parse, "{name} {x:?}");
            }
        }
    }

    #[test]
    fn clean_preserves_language() {
        let extra = Grammar::parse(
            "terminals: + * e a b\naxioms: E T F\nE -> E + T | T * F | e | a Y ;\nT -> T * F | e ;\nF -> e ;\nX -> e ;\nY -> a Y b ;\n",
        )
        .unwrap();
        let c = crate::grammar::clean(&extra).unwrap();
        assert_eq!(enumerate_language(&c, 7, DEFAULT_BUDGET), enumerate_language(&extra, 7, DEFAULT_BUDGET));
        for (_, gr) in g::all() {
            let c = crate::grammar::clean(&gr).unwrap();
            assert_eq!(enumerate_language(&c, 8, DEFAULT_BUDGET), enumerate_language(&gr, 8, DEFAULT_BUDGET));
        }
    }

    #[test]
    fn erased_parenthesized_language_matches() {
        for (_, gr) in g::all() {
            let p = parenthesize_grammar(&gr);
            let erased: BTreeSet<Vec<String>> = enumerate_language(&p.grammar, 24, DEFAULT_BUDGET)
                .unwrap()
                .into_iter()
                .map(|s| s.into_iter().filter(|x| x != OPEN && x != CLOSE).collect::<Vec<_>>())
                .filter(|s| s.len() <= 6)
                .collect();
            let direct: BTreeSet<Vec<String>> =
                enumerate_language(&gr, 6, DEFAULT_BUDGET).unwrap().into_iter().collect();
            // nesting depth bounds the parenthesized length, so compare on the words reached
            assert!(erased.is_subset(&direct));
            for x in &direct {
                if x.len() <= 4 {
                    assert!(erased.contains(x), "{x:?}");
                }
            }
        }
    }

    /// BDR output generates the same parenthesized strings as its input, up to renaming.
    #[test]
    fn bdr_preserves_parenthesized_language() {
        let mut cases: Vec<Grammar> = g::all().into_iter().map(|(_, g)| g).collect();
        cases.push(Grammar::parse("axioms: S\nS -> x A y | z B z ;\nA -> a b ;\nB -> a b ;").unwrap());
        cases.push(Grammar::parse("axioms: S\nS -> x A y | x B y ;\nA -> a b ;\nB -> a b | a c ;").unwrap());
        for gr in cases {
            let b = crate::grammar::normalize_bdr(&gr).unwrap();
            let lp = enumerate_language(&parenthesize_grammar(&gr).grammar, 10, DEFAULT_BUDGET).unwrap();
            let lb = enumerate_language(&parenthesize_grammar(&b).grammar, 10, DEFAULT_BUDGET).unwrap();
            assert_eq!(lp, lb);
            let mut rhs_seen: BTreeMap<Vec<Sym>, String> = BTreeMap::new();
            for p in &b.productions {
                if let Some(l) = rhs_seen.insert(p.rhs.clone(), p.lhs.clone()) {
                    assert_eq!(l, p.lhs, "not backward deterministic");
                }
            }
        }
    }

    fn all_words(alpha: &[String], maxlen: usize) -> Vec<Vec<String>> {
        words_up_to(alpha, maxlen)
    }

    #[test]
    fn complete_matrices_accept_everything() {
        for mat in [m::m_complete(), m::m_abc()] {
            assert!(mat.check_eq_acyclic().is_ok());
            for x in all_words(mat.alphabet(), 6) {
                if !x.is_empty() {
                    assert!(parse_max(&x, &mat).is_ok(), "{x:?}");
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn matrices() -> Vec<OpMatrix> {
            vec![m::m_ae(), m::m_complete(), m::m_abc(), m::m_int(), m::m_dyck(), m::m_cab()]
        }

        proptest! {
            #[test]
            fn stack_parser_matches_rewrite(k in 0usize..6, raw in proptest::collection::vec(0usize..8, 1..10)) {
                let mat = &matrices()[k];
                let word: Vec<usize> = raw.into_iter().map(|x| x % mat.alphabet().len()).collect();
                let fast = parse_indices(&word, mat).ok().map(|ns| ns.iter().map(|n| (n.left, n.right)).collect::<ChordSet>());
                prop_assert_eq!(fast, rewrite_oracle(&word, mat));
            }

            #[test]
            fn parse_invariants(k in 0usize..6, raw in proptest::collection::vec(0usize..8, 1..10)) {
                let mat = &matrices()[k];
                let word: Vec<String> = raw.into_iter().map(|x| mat.alphabet()[x % mat.alphabet().len()].clone()).collect();
                if let Ok(t) = parse_max(&word, mat) {
                    // erasing the markers gives back the word
                    let erased: Vec<String> = t.parenthesized_tokens().into_iter().filter(|x| x != OPEN && x != CLOSE).collect();
                    prop_assert_eq!(&erased, &word);
                    prop_assert_eq!(t.chords().len(), t.nodes.len());
                    prop_assert!(t.chords().contains(&(0, word.len() + 1)));
                    // chords are nested or touch at endpoints
                    for &(a, b) in &t.chords() {
                        for &(c, d) in &t.chords() {
                            let disjoint = b <= c || d <= a;
                            let nested = (a <= c && d <= b) || (c <= a && b <= d);
                            prop_assert!(disjoint || nested);
                        }
                    }
                    prop_assert_eq!(parse_max(&word, mat).unwrap(), t);
                }
            }

            #[test]
            fn membership_implies_parse(raw in proptest::collection::vec(0usize..3, 1..8)) {
                let gr = g::g_ae();
                let word: Vec<String> = raw.into_iter().map(|x| gr.terminals[x].clone()).collect();
                if let Membership::Member(lt) = member_grammar(&word, &gr).unwrap() {
                    prop_assert_eq!(lt.tree, parse_max(&word, &m::m_ae()).unwrap());
                }
            }
        }
    }
}
