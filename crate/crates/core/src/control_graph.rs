//! Control graphs: descending and ascending states linked by macro-edges
//! labeled with maximal terminal factors of right-hand sides.
//!
//! The same [`ControlGraph`] type hosts the plain graph of a grammar and the
//! transformed graphs (split, pipeline and counter-sequence states).

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::grammar::{Grammar, Sym};
use crate::regular::Nfa;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dir {
    Down,
    Up,
}

/// How a state relates to the counter tables (table indices start at 1).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tag {
    Plain,
    /// Copy of a state bound to one table.
    Split(usize),
    /// Pipeline element; `occ` separates repeated occurrences of a state in one table path.
    Pipe {
        table: usize,
        pos: usize,
        occ: usize,
    },
    /// Counter-sequence state for column `col`.
    Seq {
        table: usize,
        col: usize,
        members: Vec<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct State {
    pub dir: Dir,
    /// Grammar nonterminal, or the concatenated members of a counter sequence.
    pub name: String,
    pub tag: Tag,
}

impl State {
    pub fn down(a: &str) -> State {
        State { dir: Dir::Down, name: a.to_string(), tag: Tag::Plain }
    }

    pub fn up(a: &str) -> State {
        State { dir: Dir::Up, name: a.to_string(), tag: Tag::Plain }
    }

    pub fn with_tag(&self, tag: Tag) -> State {
        State { dir: self.dir, name: self.name.clone(), tag }
    }

    pub fn is_seq(&self) -> bool {
        matches!(self.tag, Tag::Seq { .. })
    }

    pub fn table(&self) -> Option<usize> {
        match self.tag {
            Tag::Plain => None,
            Tag::Split(t) | Tag::Pipe { table: t, .. } | Tag::Seq { table: t, .. } => Some(t),
        }
    }

    /// Grammar nonterminals this state stands for.
    pub fn members(&self) -> Vec<String> {
        match &self.tag {
            Tag::Seq { members, .. } => members.clone(),
            _ => vec![self.name.clone()],
        }
    }

    /// The state with its table information erased.
    pub fn erased(&self) -> State {
        State { dir: self.dir, name: self.name.clone(), tag: Tag::Plain }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = match self.dir {
            Dir::Down => "d",
            Dir::Up => "u",
        };
        write!(f, "{d}{}", self.name)?;
        match &self.tag {
            Tag::Plain => Ok(()),
            Tag::Split(i) => write!(f, "[{i}]"),
            Tag::Pipe { table, pos, occ } => {
                write!(f, "[{table},{pos}]")?;
                if *occ > 0 {
                    write!(f, "'{occ}")?;
                }
                Ok(())
            }
            Tag::Seq { table, col, .. } => {
                write!(f, "[{table}]")?;
                if *col > 0 {
                    write!(f, "^{col}")?;
                }
                Ok(())
            }
        }
    }
}

/// Row of the edge table that justifies an edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Row {
    /// A → Bγ: ⇓A −ε→ ⇓B.
    DownFirst,
    /// A → wBγ: ⇓A −w→ ⇓B.
    DownAfter,
    /// A → βB: ⇑B −ε→ ⇑A.
    UpLast,
    /// A → βBw: ⇑B −w→ ⇑A.
    UpBefore,
    /// A → βBwCγ: ⇑B −w→ ⇓C.
    Cross,
    /// A → w: ⇓A −w→ ⇑A.
    Terminal,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Provenance {
    Rule {
        production: usize,
        row: Row,
    },
    /// Built by a graph transformation from edge `source` of the input graph.
    Derived {
        step: String,
        source: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    /// Empty for ε.
    pub label: Vec<String>,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlGraph {
    pub alphabet: Vec<String>,
    pub states: Vec<State>,
    pub edges: Vec<Edge>,
}

impl ControlGraph {
    pub fn new(alphabet: Vec<String>) -> ControlGraph {
        ControlGraph { alphabet, states: Vec::new(), edges: Vec::new() }
    }

    /// Index of `s`, adding it when missing.
    pub fn intern(&mut self, s: State) -> usize {
        match self.index(&s) {
            Some(i) => i,
            None => {
                self.states.push(s);
                self.states.len() - 1
            }
        }
    }

    pub fn index(&self, s: &State) -> Option<usize> {
        self.states.iter().position(|t| t == s)
    }

    /// Looks a state up by its display name (e.g. `dA`, `uA[1,0]`).
    pub fn find(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s.to_string() == name)
    }

    pub fn add_edge(&mut self, from: usize, label: Vec<String>, to: usize, provenance: Provenance) {
        let e = Edge { from, to, label, provenance };
        if !self.edges.contains(&e) {
            self.edges.push(e);
        }
    }

    /// Distinct (from, label, to) triples, ignoring provenance.
    pub fn transitions(&self) -> BTreeSet<(usize, Vec<String>, usize)> {
        self.edges.iter().map(|e| (e.from, e.label.clone(), e.to)).collect()
    }

    /// Triples rendered with state names, convenient for comparisons.
    pub fn named_transitions(&self) -> BTreeSet<(String, String, String)> {
        self.edges
            .iter()
            .map(|e| (self.states[e.from].to_string(), e.label.concat(), self.states[e.to].to_string()))
            .collect()
    }

    /// ε-closed macro-edges: p −w→ q whenever p −ε*→ p' −w→ q' −ε*→ q with w nonempty.
    pub fn macro_edges(&self) -> BTreeSet<(usize, Vec<String>, usize)> {
        let n = self.states.len();
        let mut eps: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &self.edges {
            if e.label.is_empty() {
                eps[e.from].push(e.to);
            }
        }
        let closure = |s: usize, forward: bool| -> Vec<usize> {
            let mut seen = vec![false; n];
            let mut q = VecDeque::from([s]);
            seen[s] = true;
            while let Some(x) = q.pop_front() {
                for y in 0..n {
                    let linked = if forward { eps[x].contains(&y) } else { eps[y].contains(&x) };
                    if linked && !seen[y] {
                        seen[y] = true;
                        q.push_back(y);
                    }
                }
            }
            (0..n).filter(|&i| seen[i]).collect()
        };
        let mut out = BTreeSet::new();
        for e in self.edges.iter().filter(|e| !e.label.is_empty()) {
            for p in closure(e.from, false) {
                for q in closure(e.to, true) {
                    out.insert((p, e.label.clone(), q));
                }
            }
        }
        out
    }

    /// DOT rendering: ⇓ states as boxes, ⇑ states as ellipses, counter sequences double-bordered.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph control {\n  rankdir=LR;\n");
        for (i, st) in self.states.iter().enumerate() {
            let shape = match st.dir {
                Dir::Down => "box",
                Dir::Up => "ellipse",
            };
            let periph = if st.is_seq() { ", peripheries=2" } else { "" };
            s.push_str(&format!("  s{i} [label=\"{}\", shape={shape}{periph}];\n", dot_escape(&st.to_string())));
        }
        for e in &self.edges {
            let label =
                if e.label.is_empty() { "ε".to_string() } else { e.label.iter().map(|x| render_symbol(x)).collect() };
            s.push_str(&format!("  s{} -> s{} [label=\"{}\"];\n", e.from, e.to, dot_escape(&label)));
        }
        s.push_str("}\n");
        s
    }
}

/// Incremental graph construction with hashed state and edge lookup.
pub struct GraphBuilder {
    graph: ControlGraph,
    ids: HashMap<State, usize>,
    seen: HashSet<Edge>,
}

impl GraphBuilder {
    pub fn new(alphabet: Vec<String>) -> GraphBuilder {
        GraphBuilder { graph: ControlGraph::new(alphabet), ids: HashMap::new(), seen: HashSet::new() }
    }

    pub fn intern(&mut self, s: State) -> usize {
        if let Some(&i) = self.ids.get(&s) {
            return i;
        }
        self.graph.states.push(s.clone());
        self.ids.insert(s, self.graph.states.len() - 1);
        self.graph.states.len() - 1
    }

    pub fn add_edge(&mut self, from: usize, label: Vec<String>, to: usize, provenance: Provenance) {
        let e = Edge { from, to, label, provenance };
        if self.seen.insert(e.clone()) {
            self.graph.edges.push(e);
        }
    }

    pub fn finish(self) -> ControlGraph {
        self.graph
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Barred symbols are already named `X_bar`; markers `epsL`/`epsR` print as is.
fn render_symbol(s: &str) -> String {
    s.to_string()
}

/// Maximal terminal factors of right-hand sides.
pub fn extract_w(g: &Grammar) -> BTreeSet<Vec<String>> {
    let mut w = BTreeSet::new();
    for p in &g.productions {
        for f in terminal_factors(&p.rhs) {
            w.insert(f.1);
        }
    }
    w
}

/// Maximal terminal runs of `rhs` as (start index, symbols).
fn terminal_factors(rhs: &[Sym]) -> Vec<(usize, Vec<String>)> {
    let mut out = Vec::new();
    let mut cur: Option<(usize, Vec<String>)> = None;
    for (i, s) in rhs.iter().enumerate() {
        match s {
            Sym::T(t) => cur.get_or_insert_with(|| (i, Vec::new())).1.push(t.clone()),
            Sym::N(_) => {
                if let Some(c) = cur.take() {
                    out.push(c);
                }
            }
        }
    }
    out.extend(cur);
    out
}

/// The control graph of `g` over plain states ⇓A, ⇑A.
pub fn build_control_graph(g: &Grammar) -> ControlGraph {
    build_control_graph_with(g, |a| (State::down(a), State::up(a)))
}

/// Control graph where nonterminal `A` is represented by the pair `states(A)`.
///
/// Used for grammars whose nonterminals are pairs of states of another graph.
pub fn build_control_graph_with(g: &Grammar, states: impl Fn(&str) -> (State, State)) -> ControlGraph {
    let mut cg = GraphBuilder::new(g.terminals.clone());
    let mut ids: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for a in &g.nonterminals {
        let (d, u) = states(a);
        let di = cg.intern(d);
        let ui = cg.intern(u);
        ids.insert(a.clone(), (di, ui));
    }
    for (pi, p) in g.productions.iter().enumerate() {
        let (da, ua) = ids[&p.lhs];
        let rule = |row| Provenance::Rule { production: pi, row };
        let nts: Vec<(usize, &str)> = p
            .rhs
            .iter()
            .enumerate()
            .filter_map(|(i, s)| match s {
                Sym::N(b) => Some((i, b.as_str())),
                Sym::T(_) => None,
            })
            .collect();
        let terms =
            |lo: usize, hi: usize| -> Vec<String> { p.rhs[lo..hi].iter().map(|s| s.name().to_string()).collect() };
        if nts.is_empty() {
            cg.add_edge(da, terms(0, p.rhs.len()), ua, rule(Row::Terminal));
            continue;
        }
        let (first, b0) = nts[0];
        let row = if first == 0 { Row::DownFirst } else { Row::DownAfter };
        cg.add_edge(da, terms(0, first), ids[b0].0, rule(row));
        for win in nts.windows(2) {
            let (i, b) = win[0];
            let (j, c) = win[1];
            cg.add_edge(ids[b].1, terms(i + 1, j), ids[c].0, rule(Row::Cross));
        }
        let (last, bn) = *nts.last().unwrap();
        let row = if last + 1 == p.rhs.len() { Row::UpLast } else { Row::UpBefore };
        cg.add_edge(ids[bn].1, terms(last + 1, p.rhs.len()), ua, rule(row));
    }
    cg.finish()
}

/// Automaton for the labels of walks from `from` to `to` whose label is nonempty.
///
/// Macro-edges are expanded into letter chains; ε-edges are kept as ε-moves.
pub fn control_language(cg: &ControlGraph, from: usize, to: usize) -> Nfa {
    control_language_multi(cg, &[from], &[to])
}

/// As [`control_language`], with several source and target states.
pub fn control_language_multi(cg: &ControlGraph, from: &[usize], to: &[usize]) -> Nfa {
    let n = cg.states.len();
    let mut nfa = Nfa::new(cg.alphabet.clone());
    // copy 0: nothing read yet; copy 1: some letter read
    for layer in 0..2 {
        for s in &cg.states {
            nfa.add_state(format!("{s}/{layer}"));
        }
    }
    let sym: BTreeMap<&str, usize> = cg.alphabet.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
    for e in &cg.edges {
        if e.label.is_empty() {
            nfa.add_edge(e.from, None, e.to);
            nfa.add_edge(n + e.from, None, n + e.to);
        } else {
            let w: Vec<usize> = e.label.iter().map(|x| sym[x.as_str()]).collect();
            nfa.add_path(e.from, &w, n + e.to);
            nfa.add_path(n + e.from, &w, n + e.to);
        }
    }
    nfa.initial = from.to_vec();
    nfa.finals = to.iter().map(|&t| n + t).collect();
    nfa
}

/// R_A: walks from ⇓A to ⇑A in the plain graph.
pub fn regular_control(cg: &ControlGraph, a: &str) -> Option<Nfa> {
    let d = cg.index(&State::down(a))?;
    let u = cg.index(&State::up(a))?;
    Some(control_language(cg, d, u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::corpus;
    use crate::parser::enumerate_nonterminals;
    use crate::regular::{determinize_minimize, Dfa};

    fn names(cg: &ControlGraph) -> BTreeSet<(String, String, String)> {
        cg.named_transitions()
    }

    fn t(a: &str, l: &str, b: &str) -> (String, String, String) {
        (a.to_string(), l.to_string(), b.to_string())
    }

    #[test]
    fn aadbc_edges() {
        let cg = build_control_graph(&corpus::g_aadbc());
        let expect: BTreeSet<_> =
            [t("dA", "a", "dB"), t("dB", "a", "dA"), t("dA", "d", "uA"), t("uA", "b", "uB"), t("uB", "c", "uA")]
                .into_iter()
                .collect();
        assert_eq!(names(&cg), expect);
    }

    #[test]
    fn w_sets() {
        let g = Grammar::parse("terminals: a b c\naxioms: A\nA -> a B c | a b ;\nB -> b ;\n").unwrap();
        let w = extract_w(&g);
        let strs: BTreeSet<String> = w.iter().map(|x| x.concat()).collect();
        assert_eq!(strs, ["a", "ab", "b", "c"].iter().map(|s| s.to_string()).collect());
        let single = Grammar::parse("terminals: a b\naxioms: A\nA -> a b ;\n").unwrap();
        let cg = build_control_graph(&single);
        assert_eq!(cg.states.len(), 2);
        assert_eq!(names(&cg), [t("dA", "ab", "uA")].into_iter().collect());
    }

    #[test]
    fn gnl_graph_rows() {
        let cg = build_control_graph(&corpus::g_nl());
        let expect: BTreeSet<_> = [
            t("dA", "a", "dB"),
            t("uB", "c", "dA"),
            t("uB", "c", "dB"),
            t("uA", "", "uA"),
            t("uB", "", "uA"),
            t("dA", "ac", "uA"),
            t("dB", "b", "dA"),
            t("uA", "c", "dA"),
            t("uA", "c", "dB"),
            t("uA", "", "uB"),
            t("uB", "", "uB"),
            t("dB", "bc", "uB"),
        ]
        .into_iter()
        .collect();
        assert_eq!(names(&cg), expect);
    }

    fn dfa_of(n: &Nfa) -> Dfa {
        determinize_minimize(n).unwrap()
    }

    #[test]
    fn aadbc_control_language() {
        let cg = build_control_graph(&corpus::g_aadbc());
        let r = dfa_of(&regular_control(&cg, "A").unwrap());
        let al = r.alphabet.clone();
        let s = |c: &str| al.iter().position(|x| x == c).unwrap();
        let aa = Dfa::word(al.clone(), &[s("a"), s("a")]).star();
        let bc = Dfa::word(al.clone(), &[s("b"), s("c")]).star();
        let hand = aa.concat(&Dfa::word(al.clone(), &[s("d")])).concat(&bc);
        for w in crate::regular::Dfa::universal(al.clone()).words_up_to(10) {
            assert_eq!(r.accepts(&w), hand.accepts(&w), "{}", r.render(&w));
        }
        assert!(r.equivalent(&hand.minimize()));
    }

    #[test]
    fn unreachable_pair_is_empty() {
        let cg = build_control_graph(&corpus::g_aadbc());
        let u = cg.index(&State::up("B")).unwrap();
        let d = cg.index(&State::down("A")).unwrap();
        assert!(dfa_of(&control_language(&cg, u, d)).is_empty());
    }

    #[test]
    fn gnl_soundness() {
        let g = corpus::g_nl();
        let cg = build_control_graph(&g);
        let sets = enumerate_nonterminals(&g, 8, 1_000_000).unwrap();
        for a in ["A", "B"] {
            let r = regular_control(&cg, a).unwrap();
            for w in &sets[a] {
                assert!(r.accepts_symbols(w).unwrap(), "{a} {w:?}");
            }
        }
    }

    #[test]
    fn soundness_all_corpus() {
        for (name, g) in corpus::all() {
            let cg = build_control_graph(&g);
            let sets = enumerate_nonterminals(&g, 7, 1_000_000).unwrap();
            for a in &g.nonterminals {
                let r = dfa_of(&regular_control(&cg, a).unwrap());
                for w in &sets[a] {
                    let idx: Vec<usize> = w.iter().map(|x| r.alphabet.iter().position(|y| y == x).unwrap()).collect();
                    assert!(r.accepts(&idx), "{name} {a} {w:?}");
                }
            }
        }
    }

    #[test]
    fn provenance_deletion() {
        let g = corpus::g_nl();
        let cg = build_control_graph(&g);
        for k in 0..g.productions.len() {
            let mut prods = g.productions.clone();
            prods.remove(k);
            let h = Grammar::unchecked(g.terminals.clone(), g.nonterminals.clone(), prods, g.axioms.clone());
            let ch = build_control_graph(&h);
            // edges not tagged with production k, renumbered past the removed one
            let kept: BTreeSet<(usize, Vec<String>, usize, usize, Row)> = cg
                .edges
                .iter()
                .filter_map(|e| match e.provenance {
                    Provenance::Rule { production, row } if production != k => {
                        let p = if production > k { production - 1 } else { production };
                        Some((e.from, e.label.clone(), e.to, p, row))
                    }
                    _ => None,
                })
                .collect();
            let got: BTreeSet<_> = ch
                .edges
                .iter()
                .map(|e| match e.provenance {
                    Provenance::Rule { production, row } => (e.from, e.label.clone(), e.to, production, row),
                    _ => unreachable!(),
                })
                .collect();
            assert_eq!(kept, got);
        }
    }

    #[test]
    fn macro_vs_letter_level() {
        // A macro-edge and its letter chain accept the same words.
        let g = Grammar::parse("terminals: a b c\naxioms: A\nA -> a b A c | c ;\n").unwrap();
        let cg = build_control_graph(&g);
        let r = dfa_of(&regular_control(&cg, "A").unwrap());
        let al = r.alphabet.clone();
        let s = |c: &str| al.iter().position(|x| x == c).unwrap();
        let ab = Dfa::word(al.clone(), &[s("a"), s("b")]).star();
        let hand = ab.concat(&Dfa::word(al.clone(), &[s("c")])).concat(&Dfa::word(al.clone(), &[s("c")]).star());
        assert!(r.equivalent(&hand.minimize()));
    }

    #[test]
    fn macro_edges_close_epsilon() {
        let cg = build_control_graph(&corpus::g_nl());
        let m = cg.macro_edges();
        let ua = cg.index(&State::up("A")).unwrap();
        let ub = cg.index(&State::up("B")).unwrap();
        let da = cg.index(&State::down("A")).unwrap();
        // ⇑B −ε→ ⇑A −c→ ⇓A
        assert!(m.contains(&(ub, vec!["c".to_string()], da)));
        assert!(m.iter().all(|(_, l, _)| !l.is_empty()));
        assert!(m.contains(&(ua, vec!["c".to_string()], da)));
    }

    #[test]
    fn dot_shapes() {
        let dot = build_control_graph(&corpus::g_aadbc()).to_dot();
        assert!(dot.contains("shape=box"));
        assert!(dot.contains("shape=ellipse"));
        assert!(dot.contains("label=\"d\""));
    }
}
