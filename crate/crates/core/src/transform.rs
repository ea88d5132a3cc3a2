//! The noncounting transformation.
//!
//! A grammar is linearized (every rhs keeps one nonterminal, the others become
//! barred terminals), counter tables of the control graph are detected, the
//! graph is split per table (Ĉ) and unrolled into pipelines feeding
//! counter-sequence states (C̄). The pair grammar G′ is read off C̄.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control_graph::{
    build_control_graph, build_control_graph_with, ControlGraph, Dir, GraphBuilder, Provenance, State, Tag,
};
use crate::grammar::{clean, Grammar, Production, Sym};

/// Left padding marker of linear productions.
pub const EPS_L: &str = "epsL";
/// Right padding marker of linear productions.
pub const EPS_R: &str = "epsR";

/// Terminal standing for nonterminal `a` in a linear production.
pub fn barred(a: &str) -> String {
    format!("{a}_bar")
}

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("closed-walk budget of {0} exceeded")]
    CycleBudgetExceeded(usize),
    #[error("the transformed grammar is empty")]
    EmptyGrammar,
}

/// A bilateral linear grammar with the origin of each production.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearGrammar {
    pub grammar: Grammar,
    /// Source production index and the rhs position kept as nonterminal (`None` for terminal rules).
    pub origin: Vec<(usize, Option<usize>)>,
}

impl LinearGrammar {
    /// Index of the linear production keeping position `pos` of source production `p`.
    pub fn production_for(&self, p: usize, pos: Option<usize>) -> Option<usize> {
        self.origin.iter().position(|&o| o == (p, pos))
    }
}

/// One linear production per nonterminal occurrence; terminal productions are copied.
pub fn linearize(g: &Grammar) -> LinearGrammar {
    let mut productions = Vec::new();
    let mut origin = Vec::new();
    let bar = |s: &Sym| match s {
        Sym::N(b) => Sym::T(barred(b)),
        t => t.clone(),
    };
    for (pi, p) in g.productions.iter().enumerate() {
        let occ: Vec<usize> = (0..p.rhs.len()).filter(|&i| p.rhs[i].is_nonterminal()).collect();
        if occ.is_empty() {
            productions.push(p.clone());
            origin.push((pi, None));
        }
        for i in occ {
            let mut rhs = Vec::new();
            if i == 0 {
                rhs.push(Sym::t(EPS_L));
            }
            rhs.extend(p.rhs[..i].iter().map(bar));
            rhs.push(p.rhs[i].clone());
            rhs.extend(p.rhs[i + 1..].iter().map(bar));
            if i + 1 == p.rhs.len() {
                rhs.push(Sym::t(EPS_R));
            }
            productions.push(Production::new(&p.lhs, rhs));
            origin.push((pi, Some(i)));
        }
    }
    let mut terminals = g.terminals.clone();
    terminals.extend(g.nonterminals.iter().map(|a| barred(a)));
    terminals.push(EPS_L.to_string());
    terminals.push(EPS_R.to_string());
    let grammar = Grammar::unchecked(terminals, g.nonterminals.clone(), productions, g.axioms.clone());
    debug_assert_eq!(grammar.productions.len(), origin.len());
    LinearGrammar { grammar, origin }
}

/// A counter table: the closed path `states[c] −labels[c]→ states[c+1]` of
/// length k·j whose labels repeat with period j; column m holds the cells c ≡ m (mod j).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterTable {
    /// Unique index, starting at 1.
    pub index: usize,
    pub dir: Dir,
    /// Order of the counters (rows).
    pub k: usize,
    /// Number of W-elements of the string (columns).
    pub j: usize,
    pub states: Vec<State>,
    pub labels: Vec<Vec<String>>,
}

impl CounterTable {
    /// Path length k·j.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn next(&self, c: usize) -> usize {
        (c + 1) % self.len()
    }

    /// T_{l+1}^m with rows l and columns m counted from 0.
    pub fn cell(&self, l: usize, m: usize) -> &State {
        &self.states[l * self.j + m]
    }

    pub fn column(&self, m: usize) -> Vec<State> {
        (0..self.k).map(|l| self.cell(l, m).clone()).collect()
    }

    /// The string u = z_1…z_j of the reference counter.
    pub fn string(&self) -> Vec<String> {
        self.labels[..self.j].concat()
    }

    /// Reference counter: column 0 with string u.
    pub fn reference(&self) -> (Vec<State>, Vec<String>) {
        (self.column(0), self.string())
    }

    /// How many earlier cells hold the state of cell `c`.
    pub fn occurrence(&self, c: usize) -> usize {
        self.states[..c].iter().filter(|s| **s == self.states[c]).count()
    }

    /// Cells holding `s`.
    pub fn cells_of(&self, s: &State) -> Vec<usize> {
        (0..self.len()).filter(|&c| self.states[c] == *s).collect()
    }

    /// Whether `from −label→ to` is the table step at cell `c`.
    pub fn is_step(&self, c: usize, from: &State, label: &[String], to: &State) -> bool {
        self.states[c] == *from && self.labels[c] == label && self.states[self.next(c)] == *to
    }

    /// Counter-sequence state of column `m`.
    pub fn seq_state(&self, m: usize) -> State {
        let members: Vec<String> = self.column(m).iter().map(|s| s.name.clone()).collect();
        State { dir: self.dir, name: members.concat(), tag: Tag::Seq { table: self.index, col: m, members } }
    }

    /// Reference counter as `(uAuB, cA_bar)`.
    pub fn render_reference(&self) -> String {
        let xs: String = self.column(0).iter().map(|s| s.to_string()).collect();
        format!("({xs}, {})", self.string().join(" "))
    }

    /// The k×j grid, one row per line: `T_l^0 −z_1→ T_l^1 … −z_j→ T_{l+1}^0`.
    pub fn render_grid(&self) -> String {
        let mut out = String::new();
        for l in 0..self.k {
            for m in 0..self.j {
                let c = l * self.j + m;
                out.push_str(&format!("{} -{}-> ", self.states[c], self.labels[c].join(" ")));
            }
            out.push_str(&format!("{}\n", self.states[self.next(l * self.j + self.j - 1)]));
        }
        out
    }
}

/// Bounds of the closed-walk enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleLimits {
    /// Occurrences of one state in a walk.
    pub max_occurrences: usize,
    /// Walk length; `None` means twice the number of states of the direction.
    pub max_len: Option<usize>,
    /// Edge expansions before giving up.
    pub budget: usize,
}

impl Default for CycleLimits {
    fn default() -> Self {
        CycleLimits { max_occurrences: 2, max_len: None, budget: 2_000_000 }
    }
}

/// (j, k) when the closed walk is a counter-table path.
fn table_shape(states: &[State], labels: &[Vec<String>]) -> Option<(usize, usize)> {
    let l = states.len();
    let j = (1..=l).find(|&j| l.is_multiple_of(j) && (0..l).all(|c| labels[c] == labels[(c + j) % l]))?;
    let k = l / j;
    if k < 2 {
        return None;
    }
    for m in 0..j {
        let col: BTreeSet<&State> = (0..k).map(|r| &states[r * j + m]).collect();
        if col.len() != k {
            return None;
        }
    }
    Some((j, k))
}

type Path = (Vec<State>, Vec<Vec<String>>);

/// Lexicographically minimal rotation.
fn canonical(states: &[State], labels: &[Vec<String>]) -> Path {
    let l = states.len();
    let key = |r: usize| -> Vec<(&State, &Vec<String>)> {
        (0..l).map(|c| (&states[(c + r) % l], &labels[(c + r) % l])).collect()
    };
    let best = (0..l).min_by(|&a, &b| key(a).cmp(&key(b))).unwrap_or(0);
    ((0..l).map(|c| states[(c + best) % l].clone()).collect(), (0..l).map(|c| labels[(c + best) % l].clone()).collect())
}

/// All counter tables of `cg`, searched on its ε-closed macro-edges.
pub fn find_counter_tables(cg: &ControlGraph, limits: &CycleLimits) -> Result<Vec<CounterTable>, TransformError> {
    let n = cg.states.len();
    let mut out: Vec<Vec<(Vec<String>, usize)>> = vec![Vec::new(); n];
    for (a, w, b) in cg.macro_edges() {
        if cg.states[a].dir == cg.states[b].dir {
            out[a].push((w, b));
        }
    }
    let per_dir = |d: Dir| cg.states.iter().filter(|s| s.dir == d).count();
    let mut found: BTreeSet<Path> = BTreeSet::new();
    let mut spent = 0usize;
    for s in 0..n {
        let max_len = limits.max_len.unwrap_or(2 * per_dir(cg.states[s].dir));
        let mut occ = vec![0usize; n];
        occ[s] = 1;
        let mut walk = Walk { out: &out, start: s, max_len, max_occ: limits.max_occurrences, budget: limits.budget };
        walk.dfs(s, &mut vec![s], &mut Vec::new(), &mut occ, &mut spent, &mut |vs, ls| {
            let states: Vec<State> = vs.iter().map(|&v| cg.states[v].clone()).collect();
            if table_shape(&states, ls).is_some() {
                found.insert(canonical(&states, ls));
            }
        })?;
    }
    Ok(number_tables(found))
}

fn number_tables(found: BTreeSet<Path>) -> Vec<CounterTable> {
    let mut v: Vec<Path> = found.into_iter().collect();
    v.sort_by(|a, b| (a.0[0].dir, a).cmp(&(b.0[0].dir, b)));
    v.into_iter()
        .enumerate()
        .map(|(i, (states, labels))| {
            let (j, k) = table_shape(&states, &labels).expect("checked shape");
            CounterTable { index: i + 1, dir: states[0].dir, k, j, states, labels }
        })
        .collect()
}

struct Walk<'a> {
    out: &'a [Vec<(Vec<String>, usize)>],
    start: usize,
    max_len: usize,
    max_occ: usize,
    budget: usize,
}

/// Receives each closed walk as (states, labels).
type EmitCycle<'e> = dyn FnMut(&[usize], &[Vec<String>]) + 'e;

impl Walk<'_> {
    fn dfs(
        &mut self,
        v: usize,
        vs: &mut Vec<usize>,
        ls: &mut Vec<Vec<String>>,
        occ: &mut [usize],
        spent: &mut usize,
        emit: &mut EmitCycle,
    ) -> Result<(), TransformError> {
        for (w, t) in &self.out[v] {
            *spent += 1;
            if *spent > self.budget {
                return Err(TransformError::CycleBudgetExceeded(self.budget));
            }
            let t = *t;
            if t == self.start {
                ls.push(w.clone());
                emit(vs, ls);
                ls.pop();
                continue;
            }
            if t < self.start || occ[t] >= self.max_occ || vs.len() >= self.max_len {
                continue;
            }
            occ[t] += 1;
            vs.push(t);
            ls.push(w.clone());
            self.dfs(t, vs, ls, occ, spent, emit)?;
            ls.pop();
            vs.pop();
            occ[t] -= 1;
        }
        Ok(())
    }
}

/// Erases table indices and folds a repeated path to its primitive table.
pub fn project_tables(tables: &[CounterTable]) -> BTreeSet<Path> {
    let mut out = BTreeSet::new();
    for t in tables {
        let states: Vec<State> = t.states.iter().map(|s| s.erased()).collect();
        let l = states.len();
        let p = (1..=l)
            .find(|&p| {
                l.is_multiple_of(p)
                    && (0..l).all(|c| states[c] == states[(c + p) % l] && t.labels[c] == t.labels[(c + p) % l])
            })
            .unwrap_or(l);
        out.insert(canonical(&states[..p], &t.labels[..p]));
    }
    out
}

/// Table paths without indices, for comparisons.
pub fn table_paths(tables: &[CounterTable]) -> BTreeSet<Path> {
    tables.iter().map(|t| (t.states.clone(), t.labels.clone())).collect()
}

/// A descending and an ascending table realized by one derivation A ⇒* u A v.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pairing {
    pub desc: usize,
    pub asc: usize,
    pub desc_order: usize,
    pub asc_order: usize,
    /// The search is exhaustive over the finite product graph.
    pub exact: bool,
    /// Nonterminal where the closed derivation starts.
    pub start: String,
    /// Linear productions of the closed derivation, in order.
    pub derivation: Vec<usize>,
}

impl Pairing {
    pub fn coprime(&self) -> bool {
        gcd(self.desc_order, self.asc_order) == 1
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Paired tables, found by following productions A → uBv that advance the
/// descending path by one cell and walk the ascending path back by one cell.
///
/// Each product node (p, q) has at most one successor, so following it from
/// every node for lcm(L_d, L_a) steps decides pairing exactly.
pub fn find_paired_counters(gl: &LinearGrammar, tables: &[CounterTable]) -> Vec<Pairing> {
    let g = &gl.grammar;
    let mut lin: HashMap<(String, Vec<String>, String, Vec<String>), usize> = HashMap::new();
    for (i, p) in g.productions.iter().enumerate() {
        if let Some(pos) = p.rhs.iter().position(|s| s.is_nonterminal()) {
            let u: Vec<String> = p.rhs[..pos].iter().map(|s| s.name().to_string()).collect();
            let v: Vec<String> = p.rhs[pos + 1..].iter().map(|s| s.name().to_string()).collect();
            lin.insert((p.lhs.clone(), u, p.rhs[pos].name().to_string(), v), i);
        }
    }
    let mut res = Vec::new();
    for d in tables.iter().filter(|t| t.dir == Dir::Down) {
        for a in tables.iter().filter(|t| t.dir == Dir::Up) {
            let (ld, la) = (d.len(), a.len());
            let period = ld / gcd(ld, la) * la;
            let step = |p: usize, q: usize| -> Option<usize> {
                let qm = (q + la - 1) % la;
                let key = (
                    d.states[p].name.clone(),
                    d.labels[p].clone(),
                    d.states[d.next(p)].name.clone(),
                    a.labels[qm].clone(),
                );
                (a.states[qm].name == key.2 && a.states[q].name == key.0).then(|| lin.get(&key).copied()).flatten()
            };
            'start: for p0 in 0..ld {
                for q0 in (0..la).filter(|&q| a.states[q].name == d.states[p0].name) {
                    let (mut p, mut q) = (p0, q0);
                    let mut derivation = Vec::new();
                    for _ in 0..period {
                        match step(p, q) {
                            Some(pi) => derivation.push(pi),
                            None => break,
                        }
                        p = d.next(p);
                        q = (q + la - 1) % la;
                    }
                    if derivation.len() == period && (p, q) == (p0, q0) {
                        res.push(Pairing {
                            desc: d.index,
                            asc: a.index,
                            desc_order: d.k,
                            asc_order: a.k,
                            exact: true,
                            start: d.states[p0].name.clone(),
                            derivation,
                        });
                        break 'start;
                    }
                }
            }
        }
    }
    res
}

/// Ĉ: every state of a table is split into one copy per table; edges are replicated over all copies.
pub fn build_hat(cg: &ControlGraph, tables: &[CounterTable]) -> ControlGraph {
    let mut member: HashMap<&State, Vec<usize>> = HashMap::new();
    for t in tables {
        for s in t.states.iter().collect::<BTreeSet<_>>() {
            member.entry(s).or_default().push(t.index);
        }
    }
    let copies = |s: &State| -> Vec<State> {
        match member.get(s) {
            Some(ix) => ix.iter().map(|&i| s.with_tag(Tag::Split(i))).collect(),
            None => vec![s.clone()],
        }
    };
    let mut b = GraphBuilder::new(cg.alphabet.clone());
    for s in &cg.states {
        for c in copies(s) {
            b.intern(c);
        }
    }
    for (ei, e) in cg.edges.iter().enumerate() {
        for x in copies(&cg.states[e.from]) {
            for y in copies(&cg.states[e.to]) {
                let (x, y) = (b.intern(x.clone()), b.intern(y));
                b.add_edge(x, e.label.clone(), y, Provenance::Derived { step: "hat".into(), source: ei });
            }
        }
    }
    b.finish()
}

/// Copies of plain states in C̄.
struct BarIndex<'a> {
    tables: &'a [CounterTable],
    cells: HashMap<State, Vec<(usize, usize)>>,
}

impl<'a> BarIndex<'a> {
    fn new(tables: &'a [CounterTable]) -> Self {
        let mut cells: HashMap<State, Vec<(usize, usize)>> = HashMap::new();
        for (ti, t) in tables.iter().enumerate() {
            for (c, s) in t.states.iter().enumerate() {
                cells.entry(s.clone()).or_default().push((ti, c));
            }
        }
        BarIndex { tables, cells }
    }

    fn pipe(&self, ti: usize, c: usize, r: usize) -> State {
        let t = &self.tables[ti];
        t.states[c].with_tag(Tag::Pipe { table: t.index, pos: r, occ: t.occurrence(c) })
    }

    fn copies(&self, s: &State) -> Vec<State> {
        let Some(cells) = self.cells.get(s) else { return vec![s.clone()] };
        let mut v = Vec::new();
        for &(ti, c) in cells {
            let t = &self.tables[ti];
            v.extend((0..t.len()).map(|r| self.pipe(ti, c, r)));
            v.push(t.seq_state(c % t.j));
        }
        v
    }

    fn entries(&self, s: &State) -> Vec<State> {
        match self.cells.get(s) {
            None => vec![s.clone()],
            Some(cells) => cells.iter().map(|&(ti, c)| self.pipe(ti, c, 0)).collect(),
        }
    }

    /// Cell of `s` in table position `ti` with occurrence `occ`.
    fn cell(&self, ti: usize, s: &State, occ: usize) -> usize {
        self.cells[s].iter().filter(|&&(t, _)| t == ti).map(|&(_, c)| c).nth(occ).expect("pipe cell")
    }

    fn table_pos(&self, index: usize) -> usize {
        self.tables.iter().position(|t| t.index == index).expect("table index")
    }
}

/// C̄: pipelines from entry points into counter-sequence states, which loop on
/// the table string; every other move exits to plain states or entry points.
pub fn build_bar(cg: &ControlGraph, tables: &[CounterTable]) -> ControlGraph {
    let ix = BarIndex::new(tables);
    let mut b = GraphBuilder::new(cg.alphabet.clone());
    for s in &cg.states {
        for c in ix.copies(s) {
            b.intern(c);
        }
    }
    for (ei, e) in cg.edges.iter().enumerate() {
        let (from, to) = (&cg.states[e.from], &cg.states[e.to]);
        for q in ix.copies(from) {
            let targets = match &q.tag {
                Tag::Pipe { table, pos, occ } => {
                    let ti = ix.table_pos(*table);
                    let t = &tables[ti];
                    let c = ix.cell(ti, from, *occ);
                    if t.is_step(c, from, &e.label, to) {
                        let n = t.next(c);
                        vec![if pos + 1 < t.len() { ix.pipe(ti, n, pos + 1) } else { t.seq_state(n % t.j) }]
                    } else {
                        ix.entries(to)
                    }
                }
                Tag::Seq { table, col, .. } => {
                    let ti = ix.table_pos(*table);
                    let t = &tables[ti];
                    let c = (0..t.k).map(|l| l * t.j + col).find(|&c| t.states[c] == *from).expect("member cell");
                    if t.is_step(c, from, &e.label, to) {
                        vec![t.seq_state((col + 1) % t.j)]
                    } else {
                        ix.entries(to)
                    }
                }
                _ => ix.entries(to),
            };
            let x = b.intern(q);
            for y in targets {
                let y = b.intern(y);
                b.add_edge(x, e.label.clone(), y, Provenance::Derived { step: "bar".into(), source: ei });
            }
        }
    }
    b.finish()
}

/// Descending and ascending component of a G′ nonterminal, and the nonterminal of G it stands for.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairInfo {
    pub down: State,
    pub up: State,
    pub source: String,
}

/// The pair grammar G′ with the meaning of its nonterminals.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GPrime {
    pub grammar: Grammar,
    pub pairs: BTreeMap<String, PairInfo>,
}

impl GPrime {
    /// C(G′): nonterminal (d, u) is drawn as the states d and u.
    pub fn control_graph(&self) -> ControlGraph {
        build_control_graph_with(&self.grammar, |n| {
            let p = &self.pairs[n];
            (p.down.clone(), p.up.clone())
        })
    }
}

fn pair_name(d: &State, u: &State, a: &str) -> String {
    if d.is_seq() && u.is_seq() {
        format!("({d},{u})/{a}")
    } else {
        format!("({d},{u})")
    }
}

type Triple = (State, Vec<String>, State);

/// G′ over pairs of C̄ states.
///
/// A rule for A keeps the shape of a rule of G. Each child's descending
/// component follows a C̄ edge from the lhs descending component along the
/// production's descending edge; the lhs ascending component is reached by a
/// C̄ edge from at least one child's ascending component; the remaining
/// ascending components are free. Two counter-sequence states form a pair
/// only when their tables are paired.
pub fn build_gprime(
    g: &Grammar,
    gl: &LinearGrammar,
    cg: &ControlGraph,
    bar: &ControlGraph,
    pairings: &[Pairing],
) -> Result<GPrime, TransformError> {
    let mut succ: HashMap<(usize, Triple), Vec<usize>> = HashMap::new();
    for e in &bar.edges {
        if let Provenance::Derived { source, .. } = e.provenance {
            let ce = &cg.edges[source];
            let key = (e.from, (cg.states[ce.from].clone(), ce.label.clone(), cg.states[ce.to].clone()));
            succ.entry(key).or_default().push(e.to);
        }
    }
    let next = |q: usize, t: &Triple| -> Vec<usize> { succ.get(&(q, t.clone())).cloned().unwrap_or_default() };
    let copies = |dir: Dir, a: &str| -> Vec<usize> {
        (0..bar.states.len())
            .filter(|&i| bar.states[i].dir == dir && bar.states[i].members().iter().any(|m| m == a))
            .collect()
    };
    let paired: BTreeSet<(usize, usize)> = pairings.iter().map(|p| (p.desc, p.asc)).collect();
    let admissible = |d: usize, u: usize| -> bool {
        let (d, u) = (&bar.states[d], &bar.states[u]);
        !(d.is_seq() && u.is_seq()) || paired.contains(&(d.table().unwrap(), u.table().unwrap()))
    };
    let mut pairs: BTreeMap<String, PairInfo> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut name = |d: usize, u: usize, a: &str| -> String {
        let n = pair_name(&bar.states[d], &bar.states[u], a);
        if !pairs.contains_key(&n) {
            pairs.insert(
                n.clone(),
                PairInfo { down: bar.states[d].clone(), up: bar.states[u].clone(), source: a.to_string() },
            );
            order.push(n.clone());
        }
        n
    };
    let label = |syms: &[Sym]| -> Vec<String> { syms.iter().map(|s| s.name().to_string()).collect() };
    let mut productions = Vec::new();
    for (pi, p) in g.productions.iter().enumerate() {
        let a = p.lhs.as_str();
        let kids: Vec<usize> = (0..p.rhs.len()).filter(|&i| p.rhs[i].is_nonterminal()).collect();
        if kids.is_empty() {
            let t: Triple = (State::down(a), label(&p.rhs), State::up(a));
            for d in copies(Dir::Down, a) {
                for u in next(d, &t) {
                    if admissible(d, u) {
                        productions.push(Production::new(&name(d, u, a), p.rhs.clone()));
                    }
                }
            }
            continue;
        }
        // descending and ascending edges of each child, from its linear production
        let mut edges: Vec<(Triple, Triple)> = Vec::new();
        for &pos in &kids {
            let li = gl.production_for(pi, Some(pos)).expect("linear production");
            let lr = &gl.grammar.productions[li].rhs;
            let k = lr.iter().position(|s| s.is_nonterminal()).unwrap();
            let b = p.rhs[pos].name();
            edges.push((
                (State::down(a), label(&lr[..k]), State::down(b)),
                (State::up(b), label(&lr[k + 1..]), State::up(a)),
            ));
        }
        for d in copies(Dir::Down, a) {
            let options: Vec<Vec<(usize, usize)>> = kids
                .iter()
                .zip(&edges)
                .map(|(&pos, (down, _))| {
                    let ups = copies(Dir::Up, p.rhs[pos].name());
                    next(d, down)
                        .into_iter()
                        .flat_map(|dh| ups.iter().map(move |&uh| (dh, uh)))
                        .filter(|&(x, y)| admissible(x, y))
                        .collect()
                })
                .collect();
            if options.iter().any(|o| o.is_empty()) {
                continue;
            }
            let mut pick = vec![0usize; kids.len()];
            loop {
                let mut ups: BTreeSet<usize> = BTreeSet::new();
                for (h, (_, up)) in edges.iter().enumerate() {
                    ups.extend(next(options[h][pick[h]].1, up));
                }
                let children: Vec<String> = kids
                    .iter()
                    .enumerate()
                    .map(|(h, &pos)| {
                        let (x, y) = options[h][pick[h]];
                        name(x, y, p.rhs[pos].name())
                    })
                    .collect();
                for u in ups.into_iter().filter(|&u| admissible(d, u)) {
                    let mut rhs = p.rhs.clone();
                    for (h, &pos) in kids.iter().enumerate() {
                        rhs[pos] = Sym::n(&children[h]);
                    }
                    productions.push(Production::new(&name(d, u, a), rhs));
                }
                // odometer over child choices
                let mut h = 0;
                while h < pick.len() {
                    pick[h] += 1;
                    if pick[h] < options[h].len() {
                        break;
                    }
                    pick[h] = 0;
                    h += 1;
                }
                if h == pick.len() {
                    break;
                }
            }
        }
    }
    let mut axioms = Vec::new();
    for s in &g.axioms {
        let entries: Vec<usize> = copies(Dir::Down, s)
            .into_iter()
            .filter(|&i| matches!(bar.states[i].tag, Tag::Plain | Tag::Pipe { pos: 0, .. }))
            .collect();
        for &d in &entries {
            for u in copies(Dir::Up, s) {
                if admissible(d, u) {
                    axioms.push(name(d, u, s));
                }
            }
        }
    }
    let raw = Grammar::unchecked(g.terminals.clone(), order, productions, axioms);
    let grammar = clean(&raw).map_err(|_| TransformError::EmptyGrammar)?;
    pairs.retain(|n, _| grammar.nonterminals.contains(n));
    Ok(GPrime { grammar, pairs })
}

/// Every stage of the transformation of one grammar.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Pipeline {
    pub linear: LinearGrammar,
    pub graph: ControlGraph,
    pub tables: Vec<CounterTable>,
    pub pairings: Vec<Pairing>,
    pub bar: ControlGraph,
    pub gprime: GPrime,
}

/// Runs linearization, table search, pairing, C̄ and G′.
pub fn transform(g: &Grammar, limits: &CycleLimits) -> Result<Pipeline, TransformError> {
    let linear = linearize(g);
    let graph = build_control_graph(&linear.grammar);
    let tables = find_counter_tables(&graph, limits)?;
    let pairings = find_paired_counters(&linear, &tables);
    let bar = build_bar(&graph, &tables);
    let gprime = build_gprime(g, &linear, &graph, &bar, &pairings)?;
    Ok(Pipeline { linear, graph, tables, pairings, bar, gprime })
}
