//! Noncounting verdicts for operator-precedence languages.
//!
//! A bounded pump oracle over parenthesized languages (simultaneous pumping
//! of u and v around a well-parenthesized z), its naive unparenthesized
//! counterpart, and the combined verdict that adds the paired-counter
//! analysis of the linearized grammar's control graph.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::grammar::{normalize_bdr, parenthesize_grammar, Grammar, CLOSE, OPEN};
use crate::opm::OpMatrix;
use crate::parser::{enumerate_language, member_grammar, member_parenthesized, parse_max, words_up_to, DEFAULT_BUDGET};
use crate::transform::{transform, CounterTable, CycleLimits, TransformError};

pub const DEFAULT_PUMP_N: usize = 3;
pub const DEFAULT_MAXLEN: usize = 14;
/// Membership tests allowed per oracle run.
pub const DEFAULT_TEST_BUDGET: usize = 2_000_000;

/// Extra thresholds and pump distances used to confirm that a disagreement
/// is periodic rather than a threshold effect.
const WINDOW: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NcStatus {
    Noncounting,
    Counting,
    Unknown,
}

/// x uⁿ z vⁿ y is in the language iff `member_at_n`; exponent n + m disagrees.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PumpWitness {
    pub x: Vec<String>,
    pub u: Vec<String>,
    pub z: Vec<String>,
    pub v: Vec<String>,
    pub y: Vec<String>,
    pub n: usize,
    pub m: usize,
    pub member_at_n: bool,
}

impl PumpWitness {
    pub fn pumped(&self, e: usize) -> Vec<String> {
        pump(&self.x, &self.u, &self.z, &self.v, &self.y, e)
    }

    /// Re-evaluates both exponents against `member`.
    pub fn recheck(&self, member: impl Fn(&[String]) -> bool) -> bool {
        member(&self.pumped(self.n)) == self.member_at_n && member(&self.pumped(self.n + self.m)) != self.member_at_n
    }

    pub fn render(&self) -> String {
        format!(
            "x={} u={} z={} v={} y={} n={} m={}",
            self.x.concat(),
            self.u.concat(),
            self.z.concat(),
            self.v.concat(),
            self.y.concat(),
            self.n,
            self.m
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NcBounds {
    pub pump_n: usize,
    pub maxlen: usize,
    pub sentences: usize,
    pub factorizations: usize,
    pub tests: usize,
    pub exhausted: bool,
}

/// A paired descending/ascending table couple of the linearized grammar.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingSummary {
    pub desc: String,
    pub asc: String,
    pub desc_order: usize,
    pub asc_order: usize,
    pub coprime: bool,
    pub start: String,
    pub derivation: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralEvidence {
    pub tables: usize,
    pub pairings: Vec<PairingSummary>,
    /// Counting if a pairing is not coprime, noncounting if nothing is
    /// paired, unknown otherwise or when the table search ran out of budget.
    pub status: NcStatus,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NcVerdict {
    pub status: NcStatus,
    /// True when the status does not depend on the oracle bounds.
    pub exact: bool,
    pub witness: Option<PumpWitness>,
    pub bounds: NcBounds,
    pub structural: Option<StructuralEvidence>,
}

/// A parenthesized (or plain) language seen through seeds and a membership test.
/// Membership test of a pumping language.
pub type MemberFn<'a> = Box<dyn Fn(&[String]) -> bool + 'a>;

pub struct PumpLanguage<'a> {
    pub seeds: Vec<Vec<String>>,
    pub member: MemberFn<'a>,
    /// Require z and uzv to be well-parenthesized.
    pub structured: bool,
}

impl<'a> PumpLanguage<'a> {
    /// The parenthesized language of `g`, seeded with its sentences up to `maxlen` tokens.
    pub fn grammar(g: &'a Grammar, maxlen: usize, budget: usize) -> Option<PumpLanguage<'a>> {
        let pg = parenthesize_grammar(g).grammar;
        let seeds = enumerate_language(&pg, maxlen, budget).ok()?;
        Some(PumpLanguage { seeds, member: Box::new(move |w| member_parenthesized(w, g)), structured: true })
    }

    /// The unparenthesized language of `g` with no structural constraint on the factors.
    pub fn naive(g: &'a Grammar, maxlen: usize, budget: usize) -> Option<PumpLanguage<'a>> {
        let seeds = enumerate_language(g, maxlen, budget).ok()?;
        let member = move |w: &[String]| member_grammar(w, g).map(|m| m.is_member()).unwrap_or(false);
        Some(PumpLanguage { seeds, member: Box::new(member), structured: false })
    }

    /// The parenthesized max-language of `m`, seeded with every parenthesized word up to `maxlen` tokens.
    pub fn max_language(m: &'a OpMatrix, maxlen: usize) -> PumpLanguage<'a> {
        let seeds = words_up_to(m.alphabet(), maxlen.saturating_sub(2))
            .into_iter()
            .filter(|w| !w.is_empty())
            .filter_map(|w| parse_max(&w, m).ok().map(|t| t.parenthesized_tokens()))
            .filter(|pw| pw.len() <= maxlen)
            .collect();
        PumpLanguage { seeds, member: Box::new(move |pw| in_max_language(pw, m)), structured: true }
    }

    pub fn union(a: PumpLanguage<'a>, b: PumpLanguage<'a>) -> PumpLanguage<'a> {
        let mut seeds = a.seeds;
        seeds.extend(b.seeds);
        seeds.sort();
        seeds.dedup();
        let (ma, mb) = (a.member, b.member);
        PumpLanguage { seeds, member: Box::new(move |w| ma(w) || mb(w)), structured: a.structured && b.structured }
    }

    pub fn intersection(a: PumpLanguage<'a>, b: PumpLanguage<'a>) -> PumpLanguage<'a> {
        let (ma, mb) = (a.member, b.member);
        let mut seeds: Vec<Vec<String>> = a.seeds.into_iter().filter(|w| mb(w)).collect();
        seeds.extend(b.seeds.into_iter().filter(|w| ma(w)));
        seeds.sort();
        seeds.dedup();
        PumpLanguage { seeds, member: Box::new(move |w| ma(w) && mb(w)), structured: a.structured && b.structured }
    }

    /// `universe` minus `a`; seeds are the universe's seeds outside `a`.
    pub fn difference(universe: PumpLanguage<'a>, a: PumpLanguage<'a>) -> PumpLanguage<'a> {
        let (mu, ma) = (universe.member, a.member);
        let seeds = universe.seeds.into_iter().filter(|w| !ma(w)).collect();
        PumpLanguage { seeds, member: Box::new(move |w| mu(w) && !ma(w)), structured: universe.structured }
    }
}

/// Whether `pw` is the parenthesization the matrix assigns to its letters.
pub fn in_max_language(pw: &[String], m: &OpMatrix) -> bool {
    let w = strip_markers(pw);
    !w.is_empty() && parse_max(&w, m).map(|t| t.parenthesized_tokens() == pw).unwrap_or(false)
}

pub fn strip_markers(pw: &[String]) -> Vec<String> {
    pw.iter().filter(|s| s.as_str() != OPEN && s.as_str() != CLOSE).cloned().collect()
}

fn balanced(parts: &[&[String]]) -> bool {
    let mut depth = 0i64;
    for s in parts.iter().flat_map(|p| p.iter()) {
        if s == OPEN {
            depth += 1;
        } else if s == CLOSE {
            depth -= 1;
            if depth < 0 {
                return false;
            }
        }
    }
    depth == 0
}

fn pump(x: &[String], u: &[String], z: &[String], v: &[String], y: &[String], e: usize) -> Vec<String> {
    let mut w = x.to_vec();
    for _ in 0..e {
        w.extend_from_slice(u);
    }
    w.extend_from_slice(z);
    for _ in 0..e {
        w.extend_from_slice(v);
    }
    w.extend_from_slice(y);
    w
}

fn repeats(s: &[String], start: usize, len: usize, p: usize) -> bool {
    (1..p).all(|r| s[start + r * len..start + (r + 1) * len] == s[start..start + len])
}

struct Search<'l, 'a> {
    lang: &'l PumpLanguage<'a>,
    n: usize,
    budget: usize,
    tests: usize,
}

impl Search<'_, '_> {
    fn member(&mut self, w: &[String]) -> Option<bool> {
        self.tests += 1;
        if self.tests > self.budget {
            return None;
        }
        Some((self.lang.member)(w))
    }

    /// Membership at exponents n ..= n + 2·WINDOW; a witness needs a
    /// disagreement starting at every threshold n ..= n + WINDOW.
    fn judge(&mut self, f: [&[String]; 5]) -> Option<Option<PumpWitness>> {
        let mut seq = Vec::with_capacity(2 * WINDOW + 1);
        for e in self.n..=self.n + 2 * WINDOW {
            let w = pump(f[0], f[1], f[2], f[3], f[4], e);
            seq.push(self.member(&w)?);
            if e == self.n + 2 && seq.iter().all(|&b| b == seq[0]) {
                return Some(None);
            }
        }
        let persistent = (0..=WINDOW).all(|t| (1..=WINDOW).any(|m| seq[t + m] != seq[t]));
        if !persistent {
            return Some(None);
        }
        let m = (1..=2 * WINDOW).find(|&m| seq[m] != seq[0]).unwrap();
        Some(Some(PumpWitness {
            x: f[0].to_vec(),
            u: f[1].to_vec(),
            z: f[2].to_vec(),
            v: f[3].to_vec(),
            y: f[4].to_vec(),
            n: self.n,
            m,
            member_at_n: seq[0],
        }))
    }
}

/// Bounded pump search: every factorization x u^p z v^p y (p ≥ 1, uv ≠ ε)
/// of every seed is pumped to exponents n, n+1, n+2, ...; a disagreement
/// that recurs from every threshold up to n + 3 is a counting witness.
pub fn pump_oracle(lang: &PumpLanguage, pump_n: usize, maxlen: usize, budget: usize) -> NcVerdict {
    let mut bounds = NcBounds { pump_n, maxlen, sentences: lang.seeds.len(), ..NcBounds::default() };
    let mut search = Search { lang, n: pump_n, budget, tests: 0 };
    let mut seen: HashSet<[Vec<String>; 5]> = HashSet::new();
    for s in &lang.seeds {
        let l = s.len();
        for i in 0..=l {
            for lu in 0..=l - i {
                let max_p = (l - i).checked_div(lu).unwrap_or(l.max(1));
                for p in 1..=max_p {
                    if lu > 0 && !repeats(s, i, lu, p) {
                        break;
                    }
                    let j = i + p * lu;
                    for lz in 0..=l - j {
                        let k = j + lz;
                        for lv in 0..=(l - k) / p {
                            if lu + lv == 0 || (lv > 0 && !repeats(s, k, lv, p)) {
                                continue;
                            }
                            let (x, u, z) = (&s[..i], &s[i..i + lu], &s[j..k]);
                            let (v, y) = (&s[k..k + lv], &s[k + p * lv..]);
                            if lang.structured && !(balanced(&[z]) && balanced(&[u, z, v])) {
                                continue;
                            }
                            let key = [x.to_vec(), u.to_vec(), z.to_vec(), v.to_vec(), y.to_vec()];
                            if !seen.insert(key) {
                                continue;
                            }
                            bounds.factorizations += 1;
                            match search.judge([x, u, z, v, y]) {
                                None => {
                                    bounds.tests = search.tests;
                                    bounds.exhausted = true;
                                    return NcVerdict {
                                        status: NcStatus::Unknown,
                                        exact: false,
                                        witness: None,
                                        bounds,
                                        structural: None,
                                    };
                                }
                                Some(Some(w)) => {
                                    bounds.tests = search.tests;
                                    return NcVerdict {
                                        status: NcStatus::Counting,
                                        exact: false,
                                        witness: Some(w),
                                        bounds,
                                        structural: None,
                                    };
                                }
                                Some(None) => {}
                            }
                        }
                    }
                }
            }
        }
    }
    bounds.tests = search.tests;
    NcVerdict { status: NcStatus::Noncounting, exact: false, witness: None, bounds, structural: None }
}

/// Pump oracle on the parenthesized language of `g`.
pub fn pump_oracle_parenthesized(g: &Grammar, pump_n: usize, maxlen: usize) -> NcVerdict {
    pump_oracle_parenthesized_with(g, pump_n, maxlen, DEFAULT_BUDGET)
}

pub fn pump_oracle_parenthesized_with(g: &Grammar, pump_n: usize, maxlen: usize, budget: usize) -> NcVerdict {
    match PumpLanguage::grammar(g, maxlen, budget) {
        Some(lang) => pump_oracle(&lang, pump_n, maxlen, budget),
        None => exhausted(pump_n, maxlen),
    }
}

/// Pump oracle on the unparenthesized language, ignoring structure.
pub fn pump_oracle_naive(g: &Grammar, pump_n: usize, maxlen: usize) -> NcVerdict {
    match PumpLanguage::naive(g, maxlen, DEFAULT_BUDGET) {
        Some(lang) => pump_oracle(&lang, pump_n, maxlen, DEFAULT_TEST_BUDGET),
        None => exhausted(pump_n, maxlen),
    }
}

fn exhausted(pump_n: usize, maxlen: usize) -> NcVerdict {
    NcVerdict {
        status: NcStatus::Unknown,
        exact: false,
        witness: None,
        bounds: NcBounds { pump_n, maxlen, exhausted: true, ..NcBounds::default() },
        structural: None,
    }
}

/// Paired-counter analysis of the control graph of the linearized grammar.
pub fn structural_evidence(g: &Grammar, limits: &CycleLimits) -> Result<StructuralEvidence, TransformError> {
    let g = normalize_bdr(g).unwrap_or_else(|_| g.clone());
    let p = transform(&g, limits)?;
    let lg = &p.linear.grammar;
    let pairings: Vec<PairingSummary> = p
        .pairings
        .iter()
        .map(|x| PairingSummary {
            desc: table_name(&p.tables, x.desc),
            asc: table_name(&p.tables, x.asc),
            desc_order: x.desc_order,
            asc_order: x.asc_order,
            coprime: x.coprime(),
            start: x.start.clone(),
            derivation: x.derivation.iter().map(|&i| render_production(lg, i)).collect(),
        })
        .collect();
    let status = if pairings.is_empty() {
        NcStatus::Noncounting
    } else if pairings.iter().any(|x| !x.coprime) {
        NcStatus::Counting
    } else {
        NcStatus::Unknown
    };
    Ok(StructuralEvidence { tables: p.tables.len(), pairings, status })
}

fn table_name(tables: &[CounterTable], index: usize) -> String {
    tables.iter().find(|t| t.index == index).map(|t| t.render_reference()).unwrap_or_default()
}

fn render_production(g: &Grammar, i: usize) -> String {
    let p = &g.productions[i];
    let rhs: Vec<&str> = p.rhs.iter().map(|s| s.name()).collect();
    format!("{} -> {}", p.lhs, rhs.join(" "))
}

/// Combined verdict with default bounds.
pub fn is_noncounting_opl(g: &Grammar) -> NcVerdict {
    is_noncounting_opl_with(g, DEFAULT_PUMP_N, DEFAULT_MAXLEN, DEFAULT_BUDGET)
}

/// Structural criterion and pump oracle; disagreement yields unknown.
///
/// A non-coprime pairing is a counting certificate and an empty set of
/// pairings a noncounting one; both are exact. Coprime pairings alone decide
/// nothing and leave the verdict to the oracle.
pub fn is_noncounting_opl_with(g: &Grammar, pump_n: usize, maxlen: usize, budget: usize) -> NcVerdict {
    let limits = CycleLimits { budget, ..CycleLimits::default() };
    let structural = structural_evidence(g, &limits).ok();
    let mut v = pump_oracle_parenthesized_with(g, pump_n, maxlen, budget);
    let s = structural.as_ref().map(|s| s.status).unwrap_or(NcStatus::Unknown);
    let (status, exact) = match (s, v.status) {
        (NcStatus::Counting, NcStatus::Counting) | (NcStatus::Noncounting, NcStatus::Noncounting) => (s, true),
        // the oracle only ever under-approximates counting
        (NcStatus::Counting, NcStatus::Unknown) | (NcStatus::Noncounting, NcStatus::Unknown) => (s, true),
        (NcStatus::Unknown, o) => (o, false),
        _ => (NcStatus::Unknown, false),
    };
    v.status = status;
    v.exact = exact;
    v.structural = structural;
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::corpus;
    use crate::opm::compute_opm;
    use crate::transform::linearize;

    fn toks(s: &str) -> Vec<String> {
        s.chars().map(|c| c.to_string()).collect()
    }

    fn load(src: &str) -> Grammar {
        Grammar::parse(src).unwrap()
    }

    /// c^{2n}(ab)^n, n ≥ 1.
    fn l1() -> Grammar {
        load("terminals: a b c\naxioms: S\nS -> c X b ;\nX -> c a | c S a ;\n")
    }

    /// (ab)^+ with a ⋗ b, b ⋗ a.
    fn l2() -> Grammar {
        load("terminals: a b\naxioms: Z\nZ -> W b ;\nW -> Z a | a ;\n")
    }

    /// L1 · L2: the trailing (ab)-blocks absorb the c-part as their leftmost subtree.
    fn l1l2() -> Grammar {
        load("terminals: a b c\naxioms: Z\nZ -> W b ;\nW -> Z a | S a ;\nS -> c X b ;\nX -> c a | c S a ;\n")
    }

    fn is_nc(name: &str) -> bool {
        !matches!(name, "gc" | "paired2")
    }

    #[test]
    fn gc_is_counting_with_rechecked_witness() {
        let g = corpus::g_c();
        let v = pump_oracle_parenthesized(&g, 3, 14);
        assert_eq!(v.status, NcStatus::Counting);
        let w = v.witness.unwrap();
        assert!(w.recheck(|pw| member_parenthesized(pw, &g)));
        assert!(balanced(&[&w.z]) && balanced(&[&w.u, &w.z, &w.v]));
        // the family of the example: (⦇a)^k (b⦈)^k is in L iff k is odd
        let fam = PumpWitness {
            x: vec![],
            u: toks("⦇a"),
            z: vec![],
            v: toks("b⦈"),
            y: vec![],
            n: 3,
            m: 1,
            member_at_n: true,
        };
        assert!(fam.recheck(|pw| member_parenthesized(pw, &g)));
    }

    #[test]
    fn gnc_is_noncounting_up_to_bounds() {
        let v = pump_oracle_parenthesized(&corpus::g_nc(), 3, 14);
        assert_eq!(v.status, NcStatus::Noncounting);
        assert!(v.bounds.factorizations > 0);
    }

    #[test]
    fn combined_verdicts() {
        let gc = is_noncounting_opl(&corpus::g_c());
        assert_eq!(gc.status, NcStatus::Counting);
        assert!(gc.exact);
        assert_eq!(gc.structural.as_ref().unwrap().status, NcStatus::Counting);
        let p2 = is_noncounting_opl(&corpus::g_paired2());
        assert_eq!(p2.status, NcStatus::Counting);
        let s = p2.structural.unwrap();
        assert!(s.pairings.iter().any(|p| p.desc_order == 2 && p.asc_order == 2 && !p.coprime));
        for g in [corpus::g_nc(), corpus::g_ae()] {
            let v = is_noncounting_opl(&g);
            assert_eq!(v.status, NcStatus::Noncounting);
            assert!(v.exact);
            assert!(v.structural.unwrap().pairings.is_empty());
        }
    }

    #[test]
    fn structural_and_oracle_agree_on_corpus() {
        for (name, g) in corpus::all() {
            let v = is_noncounting_opl(&g);
            let s = v.structural.as_ref().unwrap();
            let oracle = pump_oracle_parenthesized(&g, 3, 14).status;
            assert_ne!(v.status, NcStatus::Unknown, "{name}");
            assert_eq!(v.status == NcStatus::Noncounting, is_nc(name), "{name}");
            if s.status != NcStatus::Unknown {
                assert_eq!(s.status, oracle, "{name}");
            }
        }
    }

    #[test]
    fn nc_grammars_have_coprime_pairings() {
        for (name, g) in corpus::all().into_iter().filter(|(n, _)| is_nc(n)) {
            let s = structural_evidence(&g, &CycleLimits::default()).unwrap();
            assert!(s.pairings.iter().all(|p| p.coprime), "{name}");
        }
        let six = structural_evidence(&corpus::g_six(), &CycleLimits::default()).unwrap();
        assert!(six.pairings.iter().any(|p| (p.desc_order, p.asc_order) == (3, 2)));
    }

    #[test]
    fn linearization_preserves_oracle_verdict() {
        for (name, g) in corpus::all() {
            let a = pump_oracle_parenthesized(&g, 3, 14).status;
            let b = pump_oracle_parenthesized(&linearize(&g).grammar, 3, 14).status;
            assert_eq!(a, b, "{name}");
        }
    }

    #[test]
    fn complement_of_counting_stays_counting() {
        let g = corpus::g_c();
        let m = compute_opm(&g).matrix;
        let max = PumpLanguage::max_language(&m, 14);
        let lang = PumpLanguage::grammar(&g, 14, DEFAULT_BUDGET).unwrap();
        let comp = PumpLanguage::difference(max, lang);
        let v = pump_oracle(&comp, 3, 14, DEFAULT_TEST_BUDGET);
        assert_eq!(v.status, NcStatus::Counting);
        let w = v.witness.unwrap();
        assert!(w.recheck(|pw| in_max_language(pw, &m) && !member_parenthesized(pw, &g)));
    }

    #[test]
    fn max_language_is_noncounting() {
        let m = compute_opm(&corpus::g_c()).matrix;
        let v = pump_oracle(&PumpLanguage::max_language(&m, 14), 3, 14, DEFAULT_TEST_BUDGET);
        assert_eq!(v.status, NcStatus::Noncounting);
    }

    #[test]
    fn union_and_intersection_of_nc_pairs_stay_nc() {
        let nc: Vec<Grammar> = corpus::all().into_iter().filter(|(n, _)| is_nc(n)).map(|(_, g)| g).collect();
        for a in 0..nc.len() {
            for b in a + 1..nc.len() {
                let mk = |i: usize| PumpLanguage::grammar(&nc[i], 12, DEFAULT_BUDGET).unwrap();
                let u = PumpLanguage::union(mk(a), mk(b));
                assert_eq!(pump_oracle(&u, 3, 12, DEFAULT_TEST_BUDGET).status, NcStatus::Noncounting, "{a} ∪ {b}");
                let i = PumpLanguage::intersection(mk(a), mk(b));
                assert_eq!(pump_oracle(&i, 3, 12, DEFAULT_TEST_BUDGET).status, NcStatus::Noncounting, "{a} ∩ {b}");
            }
        }
    }

    #[test]
    fn concatenation_needs_structure() {
        let (g1, g2, g) = (l1(), l2(), l1l2());
        for h in [&g1, &g2, &g] {
            assert!(compute_opm(h).conflicts.is_empty());
        }
        // the grammar generates exactly L1 · L2 on short words
        let sentences = enumerate_language(&g, 14, DEFAULT_BUDGET).unwrap();
        let expected: Vec<Vec<String>> = (1..=3usize)
            .flat_map(|n| (n + 1..=7).map(move |m| (n, m)))
            .map(|(n, m)| toks(&("c".repeat(2 * n) + &"ab".repeat(m))))
            .filter(|w| w.len() <= 14)
            .collect();
        let mut exp = expected.clone();
        exp.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        assert_eq!(sentences, exp);
        // parenthesization of the smallest sentence
        let pw = parse_max(&toks("ccabab"), &compute_opm(&g).matrix).unwrap().parenthesized();
        assert_eq!(pw, "⦇⦇⦇c⦇ca⦈b⦈a⦈b⦈");
        for h in [&g1, &g2, &g] {
            assert_eq!(pump_oracle_parenthesized(h, 3, 14).status, NcStatus::Noncounting);
        }
        let naive = pump_oracle_naive(&g, 3, 14);
        assert_eq!(naive.status, NcStatus::Counting);
        assert!(naive.witness.unwrap().recheck(|w| member_grammar(w, &g).unwrap().is_member()));
        // c^{2n}(ab)^{2n} ∈ L but c^{2n+1}(ab)^{2n+1} ∉ L
        let fam =
            PumpWitness { x: vec![], u: toks("c"), z: vec![], v: toks("ab"), y: vec![], n: 4, m: 1, member_at_n: true };
        assert!(fam.recheck(|w| member_grammar(w, &g).unwrap().is_member()));
    }

    #[test]
    fn concatenations_of_nc_corpus_languages_pass() {
        // same-alphabet languages under one matrix: L2 · L2 and L1 · L2 · L2
        let l2l2 = load("terminals: a b\naxioms: Z\nZ -> W b ;\nW -> Z a | V a ;\nV -> U b ;\nU -> V a | a ;\n");
        assert_eq!(pump_oracle_parenthesized(&l2l2, 3, 14).status, NcStatus::Noncounting);
    }

    #[test]
    fn star_free_expressions_pass() {
        use crate::ope::{corpus as oc, OpeContext};
        use crate::opm::corpus as mc;
        let ctx = OpeContext::new(mc::m_abc()).unwrap();
        for (name, text) in oc::star_free() {
            let e = ctx.parse(text).unwrap();
            let seeds: Vec<Vec<String>> = ctx
                .enumerate(&e, 5)
                .unwrap()
                .into_iter()
                .filter(|w| !w.is_empty())
                .map(|w| parse_max(&w, &ctx.matrix).unwrap().parenthesized_tokens())
                .filter(|pw| pw.len() <= 12)
                .collect();
            let (ctx2, e2) = (ctx.clone(), e.clone());
            let lang = PumpLanguage {
                seeds,
                member: Box::new(move |pw| {
                    in_max_language(pw, &ctx2.matrix) && ctx2.member(&strip_markers(pw), &e2).unwrap()
                }),
                structured: true,
            };
            assert_eq!(pump_oracle(&lang, 3, 12, DEFAULT_TEST_BUDGET).status, NcStatus::Noncounting, "{name}");
        }
    }

    #[test]
    fn budget_exhaustion_is_unknown() {
        let v = pump_oracle_parenthesized_with(&corpus::g_ae(), 3, 14, 10);
        assert_eq!(v.status, NcStatus::Unknown);
        assert!(v.bounds.exhausted);
    }

    #[test]
    fn verdict_json_round_trip() {
        let v = is_noncounting_opl(&corpus::g_c());
        let s = serde_json::to_string(&v).unwrap();
        assert!(s.contains("\"status\":\"counting\""));
        let back: NcVerdict = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }
}
