//! Grammar membership through regular control languages and tree shapes.
//!
//! φ_A(x, y) holds when the letters strictly between positions x and y form a
//! word of the control language of A; it is decided by a run of the minimal
//! automaton rather than by expanding a formula. ψ_A asks every chord x↷y with
//! φ_A(x, y) to be matched by a production of A through the tree-shape
//! condition.

use std::collections::BTreeMap;

use crate::control_graph::{build_control_graph_with, control_language, ControlGraph, State};
use crate::grammar::{Grammar, Sym};
use crate::logic::{
    and_all, chord, exists, forall, implies, less, not, or_all, pred, succ, treec, Formula, LogicError, Term, WordModel,
};
use crate::opm::{compute_opm, OpMatrix};
use crate::regular::{determinize_minimize, Dfa, RegularError};

/// One production seen as terminals c_1..c_n with optional nonterminals B_0..B_n around them.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Skeleton {
    terms: Vec<String>,
    gaps: Vec<Option<String>>,
}

impl Skeleton {
    fn of(rhs: &[Sym]) -> Skeleton {
        let mut terms = Vec::new();
        let mut gaps = vec![None];
        for s in rhs {
            match s {
                Sym::T(t) => {
                    terms.push(t.clone());
                    gaps.push(None);
                }
                Sym::N(b) => *gaps.last_mut().unwrap() = Some(b.clone()),
            }
        }
        Skeleton { terms, gaps }
    }
}

/// How ψ obligations are imposed on inner chords.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PsiMode {
    /// ψ_A for the target nonterminal only, over every chord where φ_A holds.
    Literal,
    /// Obligations follow the chords typed by the matched productions, from the root down.
    Typed,
}

/// Precomputed control automata and production skeletons of a grammar.
#[derive(Clone, Debug)]
pub struct RegularControl {
    pub grammar: Grammar,
    pub matrix: OpMatrix,
    pub graph: ControlGraph,
    phi: BTreeMap<String, Dfa>,
    rules: BTreeMap<String, Vec<Skeleton>>,
}

impl RegularControl {
    /// Plain control graph; nonterminal A is controlled by walks ⇓A → ⇑A.
    /// The matrix treats every nonterminal as an axiom so that each L(A) is parsable.
    pub fn new(g: &Grammar) -> Result<RegularControl, RegularError> {
        let mut all = g.clone();
        all.axioms = g.nonterminals.clone();
        let m = compute_opm(&all).matrix;
        RegularControl::with_states(g, m, |a| (State::down(a), State::up(a)))
    }

    /// Nonterminal A is controlled by walks between the two states `states(A)`.
    pub fn with_states(
        g: &Grammar,
        matrix: OpMatrix,
        states: impl Fn(&str) -> (State, State) + Copy,
    ) -> Result<RegularControl, RegularError> {
        let graph = build_control_graph_with(g, states);
        let mut phi = BTreeMap::new();
        for a in &g.nonterminals {
            let (d, u) = states(a);
            let (d, u) = (graph.index(&d).unwrap(), graph.index(&u).unwrap());
            phi.insert(a.clone(), determinize_minimize(&control_language(&graph, d, u))?);
        }
        let mut rules: BTreeMap<String, Vec<Skeleton>> = BTreeMap::new();
        for p in &g.productions {
            rules.entry(p.lhs.clone()).or_default().push(Skeleton::of(&p.rhs));
        }
        Ok(RegularControl { grammar: g.clone(), matrix, graph, phi, rules })
    }

    /// The control automaton of `a`.
    pub fn automaton(&self, a: &str) -> Option<&Dfa> {
        self.phi.get(a)
    }

    /// Parses `w` and attaches every φ_A to the model.
    pub fn model<S: AsRef<str>>(&self, w: &[S]) -> Result<WordModel, LogicError> {
        let mut model = WordModel::new(w, &self.matrix)?;
        let syms = model.symbols.clone();
        for (a, d) in &self.phi {
            let letters: Vec<Option<usize>> = syms.iter().map(|s| d.alphabet.iter().position(|x| x == s)).collect();
            model.attach_control(a, |x, y| run(d, &letters[x + 1..y]));
        }
        Ok(model)
    }

    /// φ_A(x, y) on an attached model.
    pub fn phi(&self, model: &WordModel, a: &str, x: usize, y: usize) -> bool {
        x < y && model.control(a, x, y).unwrap_or(false)
    }

    /// Whether some production of `a` matches chord (x, y); `child` decides each present B_j.
    fn matches(
        &self,
        model: &WordModel,
        a: &str,
        x: usize,
        y: usize,
        child: &mut dyn FnMut(&str, usize, usize) -> bool,
    ) -> bool {
        let Some(rules) = self.rules.get(a) else { return false };
        rules.iter().any(|sk| {
            let mut xs = vec![x];
            self.place(model, sk, y, &mut xs, child)
        })
    }

    /// Chooses x_1..x_n left to right; `xs` holds x and the positions chosen so far.
    fn place(
        &self,
        model: &WordModel,
        sk: &Skeleton,
        y: usize,
        xs: &mut Vec<usize>,
        child: &mut dyn FnMut(&str, usize, usize) -> bool,
    ) -> bool {
        let k = xs.len() - 1;
        let prev = xs[k];
        let gap_ok =
            |child: &mut dyn FnMut(&str, usize, usize) -> bool, lo: usize, hi: usize, b: &Option<String>| match b {
                None => lo + 1 == hi,
                Some(b) => lo + 1 != hi && model.is_chord(lo, hi) && child(b, lo, hi),
            };
        if k == sk.terms.len() {
            let mut all = xs.clone();
            all.push(y);
            return check_treec_ok(model, &all) && gap_ok(child, prev, y, &sk.gaps[k]);
        }
        for p in prev + 1..y {
            if model.symbols[p] != sk.terms[k] {
                continue;
            }
            if !gap_ok(child, prev, p, &sk.gaps[k]) {
                continue;
            }
            xs.push(p);
            let ok = self.place(model, sk, y, xs, child);
            xs.pop();
            if ok {
                return true;
            }
        }
        false
    }

    /// ψ_A over every chord where φ_A holds.
    pub fn psi(&self, model: &WordModel, a: &str) -> bool {
        let s = model.symbols.len();
        for x in 0..s {
            for y in x + 1..s {
                if model.is_chord(x, y) && self.phi(model, a, x, y) {
                    let mut lit = |b: &str, lo: usize, hi: usize| self.phi(model, b, lo, hi);
                    if !self.matches(model, a, x, y, &mut lit) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Chord (x, y) typed `a`: φ_a, a matching production, and typed children.
    pub fn typed(&self, model: &WordModel, a: &str, x: usize, y: usize) -> bool {
        if !model.is_chord(x, y) || !self.phi(model, a, x, y) {
            return false;
        }
        let mut rec = |b: &str, lo: usize, hi: usize| self.typed(model, b, lo, hi);
        self.matches(model, a, x, y, &mut rec)
    }

    /// x ∈ L(A) decided as φ_A(0, |x|+1) ∧ ψ_A under the given mode.
    pub fn check<S: AsRef<str>>(&self, w: &[S], a: &str, mode: PsiMode) -> Result<bool, LogicError> {
        let model = self.model(w)?;
        let end = model.len() + 1;
        Ok(match mode {
            PsiMode::Literal => self.phi(&model, a, 0, end) && self.psi(&model, a),
            PsiMode::Typed => self.typed(&model, a, 0, end),
        })
    }

    /// Sentence membership: the conjunction of all ψ_A and an axiom control at the ends.
    pub fn chi<S: AsRef<str>>(&self, w: &[S], mode: PsiMode) -> Result<bool, LogicError> {
        let model = self.model(w)?;
        let end = model.len() + 1;
        Ok(match mode {
            PsiMode::Literal => {
                self.grammar.nonterminals.iter().all(|a| self.psi(&model, a))
                    && self.grammar.axioms.iter().any(|s| self.phi(&model, s, 0, end))
            }
            PsiMode::Typed => self.grammar.axioms.iter().any(|s| self.typed(&model, s, 0, end)),
        })
    }

    /// ψ_A as a formula over the control predicates.
    pub fn psi_formula(&self, a: &str) -> Formula {
        let x = Term::var("x");
        let y = Term::var("y");
        let mut alts = Vec::new();
        for sk in self.rules.get(a).map(|v| v.as_slice()).unwrap_or(&[]) {
            let n = sk.terms.len();
            let names: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
            let mut pos: Vec<Term> = vec![x.clone()];
            pos.extend(names.iter().map(|v| Term::var(v)));
            pos.push(y.clone());
            let mut parts = vec![treec(&pos)];
            for (i, c) in sk.terms.iter().enumerate() {
                parts.push(pred(c, pos[i + 1].clone()));
            }
            for (j, b) in sk.gaps.iter().enumerate() {
                let (lo, hi) = (pos[j].clone(), pos[j + 1].clone());
                parts.push(match b {
                    Some(b) => and_all(vec![not(succ(lo.clone(), hi.clone())), Formula::Control(b.clone(), lo, hi)]),
                    None => succ(lo, hi),
                });
            }
            let mut body = and_all(parts);
            for v in names.iter().rev() {
                body = exists(v, and_all(vec![less(x.clone(), Term::var(v)), less(Term::var(v), y.clone()), body]));
            }
            alts.push(body);
        }
        let premise = and_all(vec![Formula::Control(a.to_string(), x.clone(), y.clone()), chord(x, y)]);
        forall("x", forall("y", implies(premise, or_all(alts))))
    }
}

fn run(d: &Dfa, letters: &[Option<usize>]) -> bool {
    let mut q = d.initial;
    for l in letters {
        match l {
            Some(c) => q = d.trans[q][*c],
            None => return false,
        }
    }
    d.accepting[q]
}

fn check_treec_ok(model: &WordModel, xs: &[usize]) -> bool {
    crate::logic::check_treec(model, xs)
}

/// x ∈ L(A) decided as φ_A(0, |x|+1) ∧ ψ_A.
pub fn check_regular_control<S: AsRef<str>>(w: &[S], a: &str, g: &Grammar) -> Result<bool, LogicError> {
    let rc = RegularControl::new(g).map_err(|e| LogicError::UnknownControl(e.to_string()))?;
    rc.check(w, a, PsiMode::Literal)
}

/// χ as a formula: all ψ_A and an axiom control between the delimiters.
pub fn build_chi(rc: &RegularControl) -> Formula {
    let mut parts: Vec<Formula> = rc.grammar.nonterminals.iter().map(|a| rc.psi_formula(a)).collect();
    parts.push(or_all(
        rc.grammar.axioms.iter().map(|s| Formula::Control(s.clone(), Term::Const(0), Term::End)).collect(),
    ));
    and_all(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::corpus;
    use crate::logic::eval_formula;
    use crate::parser::{derives, words_up_to};

    fn w(s: &str) -> Vec<String> {
        s.chars().map(|c| c.to_string()).collect()
    }

    #[test]
    fn spec_examples() {
        let nl = corpus::g_nl();
        assert!(check_regular_control(&w("ac"), "A", &nl).unwrap());
        assert!(!check_regular_control(&w("bc"), "A", &nl).unwrap());
        assert!(check_regular_control(&w("e"), "F", &corpus::g_ae()).unwrap());
    }

    fn differential(g: &Grammar, maxlen: usize, mode: PsiMode) -> Vec<(String, String)> {
        let rc = RegularControl::new(g).unwrap();
        let mut bad = Vec::new();
        for x in words_up_to(&g.terminals, maxlen).into_iter().filter(|x| !x.is_empty()) {
            for a in &g.nonterminals {
                let got = rc.check(&x, a, mode).unwrap_or(false);
                if got != derives(g, a, &x) {
                    bad.push((a.clone(), x.concat()));
                }
            }
        }
        bad
    }

    #[test]
    fn both_readings_exact_on_small_grammars() {
        for g in [corpus::g_ae(), corpus::g_nl()] {
            for mode in [PsiMode::Literal, PsiMode::Typed] {
                let bad = differential(&g, 8, mode);
                assert!(bad.is_empty(), "{mode:?} {bad:?}");
            }
        }
    }

    #[test]
    fn both_readings_exact_on_corpus() {
        for (name, g) in corpus::all() {
            for mode in [PsiMode::Literal, PsiMode::Typed] {
                let bad = differential(&g, 5, mode);
                assert!(bad.is_empty(), "{name} {mode:?} {bad:?}");
            }
        }
    }

    #[test]
    fn chi_examples() {
        let ae = RegularControl::new(&corpus::g_ae()).unwrap();
        assert!(ae.chi(&w("e+e*e+e"), PsiMode::Typed).unwrap());
        assert!(!ae.chi(&w("+++"), PsiMode::Typed).unwrap_or(false));
        let nl = RegularControl::new(&corpus::g_nl()).unwrap();
        assert!(nl.chi(&w("ac"), PsiMode::Typed).unwrap());
    }

    #[test]
    fn literal_chi_rejects_overlapping_controls() {
        // R_T contains e+e*e, so ψ_T fails on the chord spanning it.
        let ae = RegularControl::new(&corpus::g_ae()).unwrap();
        assert!(!ae.chi(&w("e+e*e+e"), PsiMode::Literal).unwrap());
    }

    #[test]
    fn chi_formula_agrees_with_direct_evaluation() {
        let nl = RegularControl::new(&corpus::g_nl()).unwrap();
        let chi = build_chi(&nl);
        for x in words_up_to(&nl.grammar.terminals, 5).into_iter().filter(|x| !x.is_empty()) {
            let Ok(model) = nl.model(&x) else { continue };
            assert_eq!(eval_formula(&chi, &model).unwrap(), nl.chi(&x, PsiMode::Literal).unwrap(), "{x:?}");
        }
    }
}
