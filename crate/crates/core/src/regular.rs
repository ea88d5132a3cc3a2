//! Finite automata over symbol alphabets.
//!
//! Letters are indices into an alphabet of (possibly multi-character) symbol
//! names. [`Nfa`] allows ε-moves and serves as the exchange format; [`Dfa`] is
//! always complete. The transition monoid gives the exact aperiodicity test.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegularError {
    #[error("state budget of {0} exceeded")]
    StateBudgetExceeded(usize),
    #[error("monoid budget of {0} elements exceeded")]
    MonoidBudgetExceeded(usize),
    #[error("alphabets differ")]
    AlphabetMismatch,
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
}

pub const DEFAULT_STATE_BUDGET: usize = 100_000;
pub const DEFAULT_MONOID_BUDGET: usize = 1_000_000;

/// Nondeterministic automaton; `None` labels are ε-moves.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Nfa {
    pub alphabet: Vec<String>,
    pub states: Vec<String>,
    pub transitions: Vec<(usize, Option<usize>, usize)>,
    pub initial: Vec<usize>,
    #[serde(rename = "final")]
    pub finals: Vec<usize>,
}

impl Nfa {
    pub fn new(alphabet: Vec<String>) -> Self {
        Nfa { alphabet, states: Vec::new(), transitions: Vec::new(), initial: Vec::new(), finals: Vec::new() }
    }

    pub fn add_state(&mut self, name: impl Into<String>) -> usize {
        self.states.push(name.into());
        self.states.len() - 1
    }

    pub fn add_edge(&mut self, from: usize, label: Option<usize>, to: usize) {
        self.transitions.push((from, label, to));
    }

    /// Adds a chain `from -w-> to` with fresh intermediate states; ε when `w` is empty.
    pub fn add_path(&mut self, from: usize, w: &[usize], to: usize) {
        if w.is_empty() {
            self.add_edge(from, None, to);
            return;
        }
        let mut cur = from;
        for (k, &c) in w.iter().enumerate() {
            let next = if k + 1 == w.len() {
                to
            } else {
                let name = format!("{}~{}", self.states[from], self.transitions.len());
                self.add_state(name)
            };
            self.add_edge(cur, Some(c), next);
            cur = next;
        }
    }

    pub fn symbol(&self, name: &str) -> Result<usize, RegularError> {
        self.alphabet.iter().position(|s| s == name).ok_or_else(|| RegularError::UnknownSymbol(name.to_string()))
    }

    fn closure(&self, set: &mut BTreeSet<usize>, eps: &[Vec<usize>]) {
        let mut stack: Vec<usize> = set.iter().copied().collect();
        while let Some(q) = stack.pop() {
            for &r in &eps[q] {
                if set.insert(r) {
                    stack.push(r);
                }
            }
        }
    }

    fn tables(&self) -> (Vec<Vec<usize>>, Vec<Vec<Vec<usize>>>) {
        let n = self.states.len();
        let mut eps = vec![Vec::new(); n];
        let mut delta = vec![vec![Vec::new(); self.alphabet.len()]; n];
        for &(p, l, q) in &self.transitions {
            match l {
                None => eps[p].push(q),
                Some(c) => delta[p][c].push(q),
            }
        }
        (eps, delta)
    }

    pub fn accepts(&self, w: &[usize]) -> bool {
        let (eps, delta) = self.tables();
        let mut cur: BTreeSet<usize> = self.initial.iter().copied().collect();
        self.closure(&mut cur, &eps);
        for &c in w {
            let mut next = BTreeSet::new();
            for &q in &cur {
                next.extend(delta[q][c].iter().copied());
            }
            self.closure(&mut next, &eps);
            cur = next;
        }
        cur.iter().any(|q| self.finals.contains(q))
    }

    pub fn accepts_symbols<S: AsRef<str>>(&self, w: &[S]) -> Result<bool, RegularError> {
        let idx = w.iter().map(|s| self.symbol(s.as_ref())).collect::<Result<Vec<_>, _>>()?;
        Ok(self.accepts(&idx))
    }

    /// Subset construction; the result is complete but not minimal.
    #[allow(clippy::needless_range_loop)] // one row entry per letter index
    pub fn determinize(&self, budget: usize) -> Result<Dfa, RegularError> {
        let (eps, delta) = self.tables();
        let finals: BTreeSet<usize> = self.finals.iter().copied().collect();
        let mut start: BTreeSet<usize> = self.initial.iter().copied().collect();
        self.closure(&mut start, &eps);
        let mut ids: HashMap<BTreeSet<usize>, usize> = HashMap::new();
        let mut sets = vec![start.clone()];
        ids.insert(start, 0);
        let mut trans: Vec<Vec<usize>> = Vec::new();
        let mut i = 0;
        while i < sets.len() {
            let mut row = Vec::with_capacity(self.alphabet.len());
            for c in 0..self.alphabet.len() {
                let mut next: BTreeSet<usize> = sets[i].iter().flat_map(|&q| delta[q][c].iter().copied()).collect();
                self.closure(&mut next, &eps);
                let id = match ids.get(&next) {
                    Some(&id) => id,
                    None => {
                        if sets.len() >= budget {
                            return Err(RegularError::StateBudgetExceeded(budget));
                        }
                        sets.push(next.clone());
                        ids.insert(next, sets.len() - 1);
                        sets.len() - 1
                    }
                };
                row.push(id);
            }
            trans.push(row);
            i += 1;
        }
        let accepting = sets.iter().map(|s| s.iter().any(|q| finals.contains(q))).collect();
        Ok(Dfa { alphabet: self.alphabet.clone(), trans, initial: 0, accepting })
    }

    /// Words of length at most `maxlen`, shortlex order.
    pub fn words_up_to(&self, maxlen: usize) -> Result<Vec<Vec<usize>>, RegularError> {
        Ok(self.determinize(DEFAULT_STATE_BUDGET)?.words_up_to(maxlen))
    }
}

/// Complete deterministic automaton.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dfa {
    pub alphabet: Vec<String>,
    pub trans: Vec<Vec<usize>>,
    pub initial: usize,
    pub accepting: Vec<bool>,
}

impl Dfa {
    /// The empty language: a single rejecting sink.
    pub fn empty(alphabet: Vec<String>) -> Self {
        let k = alphabet.len();
        Dfa { alphabet, trans: vec![vec![0; k]], initial: 0, accepting: vec![false] }
    }

    pub fn universal(alphabet: Vec<String>) -> Self {
        Dfa::empty(alphabet).complement()
    }

    pub fn epsilon(alphabet: Vec<String>) -> Self {
        Dfa::word(alphabet, &[])
    }

    pub fn word(alphabet: Vec<String>, w: &[usize]) -> Self {
        let k = alphabet.len();
        let sink = w.len() + 1;
        let mut trans = vec![vec![sink; k]; w.len() + 2];
        for (i, &c) in w.iter().enumerate() {
            trans[i][c] = i + 1;
        }
        let mut accepting = vec![false; w.len() + 2];
        accepting[w.len()] = true;
        Dfa { alphabet, trans, initial: 0, accepting }
    }

    /// Words of length one whose letter satisfies `pred`.
    pub fn letters(alphabet: Vec<String>, pred: impl Fn(usize) -> bool) -> Self {
        let k = alphabet.len();
        let mut trans = vec![vec![2; k]; 3];
        for (c, t) in trans[0].iter_mut().enumerate() {
            if pred(c) {
                *t = 1;
            }
        }
        Dfa { alphabet, trans, initial: 0, accepting: vec![false, true, false] }
    }

    pub fn size(&self) -> usize {
        self.trans.len()
    }

    pub fn run_from(&self, q: usize, w: &[usize]) -> usize {
        w.iter().fold(q, |q, &c| self.trans[q][c])
    }

    pub fn accepts(&self, w: &[usize]) -> bool {
        self.accepting[self.run_from(self.initial, w)]
    }

    pub fn complement(&self) -> Self {
        let mut d = self.clone();
        d.accepting.iter_mut().for_each(|f| *f = !*f);
        d
    }

    /// Product automaton over reachable pairs; `op` combines acceptance.
    pub fn product(&self, other: &Dfa, op: impl Fn(bool, bool) -> bool) -> Dfa {
        assert_eq!(self.alphabet, other.alphabet, "product over different alphabets");
        let k = self.alphabet.len();
        let mut ids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut pairs = vec![(self.initial, other.initial)];
        ids.insert(pairs[0], 0);
        let mut trans = Vec::new();
        let mut i = 0;
        while i < pairs.len() {
            let (p, q) = pairs[i];
            let mut row = Vec::with_capacity(k);
            for c in 0..k {
                let t = (self.trans[p][c], other.trans[q][c]);
                let id = *ids.entry(t).or_insert_with(|| {
                    pairs.push(t);
                    pairs.len() - 1
                });
                row.push(id);
            }
            trans.push(row);
            i += 1;
        }
        let accepting = pairs.iter().map(|&(p, q)| op(self.accepting[p], other.accepting[q])).collect();
        Dfa { alphabet: self.alphabet.clone(), trans, initial: 0, accepting }
    }

    pub fn intersect(&self, other: &Dfa) -> Dfa {
        self.product(other, |a, b| a && b).minimize()
    }

    pub fn union(&self, other: &Dfa) -> Dfa {
        self.product(other, |a, b| a || b).minimize()
    }

    pub fn difference(&self, other: &Dfa) -> Dfa {
        self.product(other, |a, b| a && !b).minimize()
    }

    pub fn to_nfa(&self) -> Nfa {
        let mut n = Nfa::new(self.alphabet.clone());
        for q in 0..self.size() {
            n.add_state(format!("q{q}"));
        }
        for (p, row) in self.trans.iter().enumerate() {
            for (c, &q) in row.iter().enumerate() {
                n.add_edge(p, Some(c), q);
            }
        }
        n.initial = vec![self.initial];
        n.finals = (0..self.size()).filter(|&q| self.accepting[q]).collect();
        n
    }

    pub fn concat(&self, other: &Dfa) -> Dfa {
        let mut n = self.to_nfa();
        let off = n.states.len();
        let m = other.to_nfa();
        n.states.extend(m.states.iter().map(|s| format!("r{s}")));
        n.transitions.extend(m.transitions.iter().map(|&(p, l, q)| (p + off, l, q + off)));
        for &f in &self.accepting_states() {
            n.add_edge(f, None, other.initial + off);
        }
        n.finals = m.finals.iter().map(|q| q + off).collect();
        n.determinize(usize::MAX).expect("unbounded").minimize()
    }

    pub fn star(&self) -> Dfa {
        let mut n = self.to_nfa();
        let s = n.add_state("s");
        n.add_edge(s, None, self.initial);
        for f in self.accepting_states() {
            n.add_edge(f, None, s);
        }
        n.initial = vec![s];
        n.finals.push(s);
        n.determinize(usize::MAX).expect("unbounded").minimize()
    }

    pub fn plus(&self) -> Dfa {
        self.concat(&self.star())
    }

    pub fn accepting_states(&self) -> Vec<usize> {
        (0..self.size()).filter(|&q| self.accepting[q]).collect()
    }

    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.size()];
        let mut stack = vec![self.initial];
        seen[self.initial] = true;
        while let Some(q) = stack.pop() {
            for &r in &self.trans[q] {
                if !seen[r] {
                    seen[r] = true;
                    stack.push(r);
                }
            }
        }
        seen
    }

    /// States from which some accepting state is reachable.
    pub fn live(&self) -> Vec<bool> {
        let n = self.size();
        let mut rev = vec![Vec::new(); n];
        for (p, row) in self.trans.iter().enumerate() {
            for &q in row {
                rev[q].push(p);
            }
        }
        let mut live = self.accepting.clone();
        let mut stack: Vec<usize> = self.accepting_states();
        while let Some(q) = stack.pop() {
            for &p in &rev[q] {
                if !live[p] {
                    live[p] = true;
                    stack.push(p);
                }
            }
        }
        live
    }

    pub fn is_empty(&self) -> bool {
        let r = self.reachable();
        !(0..self.size()).any(|q| r[q] && self.accepting[q])
    }

    pub fn equivalent(&self, other: &Dfa) -> bool {
        self.product(other, |a, b| a != b).is_empty()
    }

    pub fn shortest_word(&self) -> Option<Vec<usize>> {
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; self.size()];
        let mut seen = vec![false; self.size()];
        let mut queue = VecDeque::from([self.initial]);
        seen[self.initial] = true;
        while let Some(q) = queue.pop_front() {
            if self.accepting[q] {
                let mut w = Vec::new();
                let mut cur = q;
                while let Some((p, c)) = prev[cur] {
                    w.push(c);
                    cur = p;
                }
                w.reverse();
                return Some(w);
            }
            for (c, &r) in self.trans[q].iter().enumerate() {
                if !seen[r] {
                    seen[r] = true;
                    prev[r] = Some((q, c));
                    queue.push_back(r);
                }
            }
        }
        None
    }

    /// Moore partition refinement on the reachable part, renumbered in BFS
    /// order so that equal languages give identical automata.
    pub fn minimize(&self) -> Dfa {
        let reach = self.reachable();
        let states: Vec<usize> = (0..self.size()).filter(|&q| reach[q]).collect();
        let mut class: HashMap<usize, usize> = states.iter().map(|&q| (q, self.accepting[q] as usize)).collect();
        let mut count = 0;
        loop {
            let mut sigs: BTreeMap<(usize, Vec<usize>), usize> = BTreeMap::new();
            let mut next = HashMap::new();
            for &q in &states {
                let sig = (class[&q], self.trans[q].iter().map(|r| class[r]).collect::<Vec<_>>());
                let len = sigs.len();
                let id = *sigs.entry(sig).or_insert(len);
                next.insert(q, id);
            }
            let n = sigs.len();
            class = next;
            if n == count {
                break;
            }
            count = n;
        }
        // Renumber classes in BFS order from the initial class.
        let k = self.alphabet.len();
        let mut order: HashMap<usize, usize> = HashMap::new();
        let mut rep: Vec<usize> = Vec::new();
        let mut queue = VecDeque::from([self.initial]);
        order.insert(class[&self.initial], 0);
        rep.push(self.initial);
        while let Some(q) = queue.pop_front() {
            for c in 0..k {
                let r = self.trans[q][c];
                if let std::collections::hash_map::Entry::Vacant(e) = order.entry(class[&r]) {
                    e.insert(rep.len());
                    rep.push(r);
                    queue.push_back(r);
                }
            }
        }
        let trans = rep.iter().map(|&q| self.trans[q].iter().map(|r| order[&class[r]]).collect()).collect();
        let accepting = rep.iter().map(|&q| self.accepting[q]).collect();
        Dfa { alphabet: self.alphabet.clone(), trans, initial: 0, accepting }
    }

    /// Accepted words of length at most `maxlen`, shortlex order.
    pub fn words_up_to(&self, maxlen: usize) -> Vec<Vec<usize>> {
        let live = self.live();
        let mut out = Vec::new();
        let mut layer: Vec<(Vec<usize>, usize)> = vec![(Vec::new(), self.initial)];
        for len in 0..=maxlen {
            for (w, q) in &layer {
                if self.accepting[*q] {
                    out.push(w.clone());
                }
            }
            if len == maxlen {
                break;
            }
            let mut next = Vec::new();
            for (w, q) in &layer {
                for c in 0..self.alphabet.len() {
                    let r = self.trans[*q][c];
                    if live[r] {
                        let mut w2 = w.clone();
                        w2.push(c);
                        next.push((w2, r));
                    }
                }
            }
            layer = next;
        }
        out
    }

    pub fn render(&self, w: &[usize]) -> String {
        w.iter().map(|&c| self.alphabet[c].as_str()).collect::<Vec<_>>().join(" ")
    }
}

/// Minimal complete automaton of an Nfa.
pub fn determinize_minimize(n: &Nfa) -> Result<Dfa, RegularError> {
    determinize_minimize_with(n, DEFAULT_STATE_BUDGET)
}

pub fn determinize_minimize_with(n: &Nfa, budget: usize) -> Result<Dfa, RegularError> {
    Ok(n.determinize(budget)?.minimize())
}

/// Transformations of the state set induced by nonempty words, plus identity.
#[derive(Clone, Debug)]
pub struct TransitionMonoid {
    pub elements: Vec<Vec<usize>>,
    /// Element index of each letter.
    pub generators: Vec<usize>,
}

impl TransitionMonoid {
    pub fn of(d: &Dfa, budget: usize) -> Result<Self, RegularError> {
        let n = d.size();
        let id: Vec<usize> = (0..n).collect();
        let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut elements = vec![id.clone()];
        index.insert(id, 0);
        let mut generators = Vec::new();
        let letters: Vec<Vec<usize>> = (0..d.alphabet.len()).map(|c| (0..n).map(|q| d.trans[q][c]).collect()).collect();
        for g in &letters {
            let len = elements.len();
            let e = *index.entry(g.clone()).or_insert_with(|| {
                elements.push(g.clone());
                len
            });
            generators.push(e);
        }
        let mut i = 0;
        while i < elements.len() {
            for g in &letters {
                let prod: Vec<usize> = elements[i].iter().map(|&q| g[q]).collect();
                if !index.contains_key(&prod) {
                    if elements.len() >= budget {
                        return Err(RegularError::MonoidBudgetExceeded(budget));
                    }
                    index.insert(prod.clone(), elements.len());
                    elements.push(prod);
                }
            }
            i += 1;
        }
        Ok(TransitionMonoid { elements, generators })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Every element satisfies m^n = m^(n+1) for some n.
    pub fn is_aperiodic(&self) -> bool {
        self.elements.iter().all(|m| power_period(m) == 1)
    }
}

/// Period of the sequence m, m², m³, ... once it becomes cyclic.
fn power_period(m: &[usize]) -> usize {
    let mut seen: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut cur = m.to_vec();
    let mut k = 0;
    loop {
        if let Some(&first) = seen.get(&cur) {
            return k - first;
        }
        seen.insert(cur.clone(), k);
        cur = cur.iter().map(|&q| m[q]).collect();
        k += 1;
    }
}

pub fn is_aperiodic_dfa(d: &Dfa) -> Result<bool, RegularError> {
    Ok(TransitionMonoid::of(&d.minimize(), DEFAULT_MONOID_BUDGET)?.is_aperiodic())
}

/// Exact noncounting test through the transition monoid of the minimal automaton.
pub fn is_aperiodic_regular(n: &Nfa) -> Result<bool, RegularError> {
    is_aperiodic_dfa(&determinize_minimize(n)?)
}

/// A counter: states q_0..q_{k-1}, k ≥ 2, pairwise distinct, cyclically
/// connected by one nonempty word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DfaCounter {
    pub states: Vec<usize>,
    pub word: Vec<usize>,
}

/// Searches words of length up to `maxword` for a counter.
pub fn find_dfa_counter(d: &Dfa, maxword: usize) -> Option<DfaCounter> {
    let k = d.alphabet.len();
    let mut layer: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..maxword {
        let mut next = Vec::new();
        for w in &layer {
            for c in 0..k {
                let mut w2 = w.clone();
                w2.push(c);
                for q in 0..d.size() {
                    let mut cyc = vec![q];
                    let mut cur = d.run_from(q, &w2);
                    while !cyc.contains(&cur) {
                        cyc.push(cur);
                        cur = d.run_from(cur, &w2);
                    }
                    if cur == q && cyc.len() >= 2 {
                        return Some(DfaCounter { states: cyc, word: w2 });
                    }
                }
                next.push(w2);
            }
        }
        layer = next;
    }
    None
}

/// Brute-force pump check: searches x, y ≠ ε, z with |x y^n z| ≤ maxlen such that
/// x y^n z and x y^(n+1) z disagree on membership.
pub fn pump_check(d: &Dfa, n: usize, maxlen: usize) -> Option<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let all = Dfa::universal(d.alphabet.clone());
    let words = all.words_up_to(maxlen);
    for y in words.iter().filter(|y| !y.is_empty()) {
        if n * y.len() > maxlen {
            continue;
        }
        let rest = maxlen - n * y.len();
        for x in words.iter().filter(|x| x.len() <= rest) {
            // Run x y^n once and reuse for every z.
            let mut q = d.run_from(d.initial, x);
            for _ in 0..n {
                q = d.run_from(q, y);
            }
            let q1 = d.run_from(q, y);
            for z in words.iter().filter(|z| x.len() + z.len() <= rest) {
                if d.accepting[d.run_from(q, z)] != d.accepting[d.run_from(q1, z)] {
                    return Some((x.clone(), y.clone(), z.clone()));
                }
            }
        }
    }
    None
}
