//! Context-free grammars in operator form.
//!
//! Text format, validation, cleaning, backward-deterministic reduced (BDR)
//! normalization and the parenthesized version.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The end-of-string delimiter.
pub const DELIM: &str = "#";
/// Open parenthesis marker of parenthesized grammars and strings.
pub const OPEN: &str = "⦇";
/// Close parenthesis marker.
pub const CLOSE: &str = "⦈";

pub fn is_reserved(s: &str) -> bool {
    s == DELIM || s == OPEN || s == CLOSE
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sym {
    T(String),
    N(String),
}

impl Sym {
    pub fn t(s: &str) -> Sym {
        Sym::T(s.to_string())
    }

    pub fn n(s: &str) -> Sym {
        Sym::N(s.to_string())
    }

    pub fn name(&self) -> &str {
        match self {
            Sym::T(s) | Sym::N(s) => s,
        }
    }

    pub fn is_nonterminal(&self) -> bool {
        matches!(self, Sym::N(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Production {
    pub lhs: String,
    pub rhs: Vec<Sym>,
}

impl Production {
    pub fn new(lhs: &str, rhs: Vec<Sym>) -> Production {
        Production { lhs: lhs.to_string(), rhs }
    }

    /// Nonterminals of the rhs, in order.
    pub fn rhs_nonterminals(&self) -> impl Iterator<Item = &str> {
        self.rhs.iter().filter_map(|s| match s {
            Sym::N(n) => Some(n.as_str()),
            Sym::T(_) => None,
        })
    }

    pub fn is_terminal(&self) -> bool {
        !self.rhs.is_empty() && self.rhs.iter().all(|s| !s.is_nonterminal())
    }
}

impl fmt::Display for Production {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ->", self.lhs)?;
        for s in &self.rhs {
            write!(f, " {}", s.name())?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grammar {
    pub terminals: Vec<String>,
    pub nonterminals: Vec<String>,
    pub productions: Vec<Production>,
    pub axioms: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViolationKind {
    OperatorFormViolation,
    RenamingRule,
    EmptyRule,
    UnknownSymbol,
    NoAxiom,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub production: Option<String>,
    pub note: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    fn push(&mut self, kind: ViolationKind, production: Option<&Production>, note: impl Into<String>) {
        self.violations.push(Violation { kind, production: production.map(|p| p.to_string()), note: note.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            match &v.production {
                Some(p) => writeln!(f, "{:?}: {} ({})", v.kind, p, v.note)?,
                None => writeln!(f, "{:?}: {}", v.kind, v.note)?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("invalid grammar:\n{0}")]
    Invalid(ValidationReport),
    #[error("the language of the grammar is empty")]
    EmptyLanguage,
}

impl Grammar {
    /// Builds and validates a grammar.
    pub fn new(
        terminals: Vec<String>,
        nonterminals: Vec<String>,
        productions: Vec<Production>,
        axioms: Vec<String>,
    ) -> Result<Grammar, ValidationReport> {
        let g = Grammar::unchecked(terminals, nonterminals, productions, axioms);
        let report = g.validate();
        if report.is_empty() {
            Ok(g)
        } else {
            Err(report)
        }
    }

    /// Builds a grammar without validation; duplicate productions are dropped.
    pub fn unchecked(
        terminals: Vec<String>,
        nonterminals: Vec<String>,
        productions: Vec<Production>,
        axioms: Vec<String>,
    ) -> Grammar {
        Grammar {
            terminals: dedup(terminals),
            nonterminals: dedup(nonterminals),
            productions: dedup(productions),
            axioms: dedup(axioms),
        }
    }

    /// Builds a grammar from productions, collecting symbols in order of appearance.
    pub fn from_productions(productions: Vec<Production>, axioms: &[&str]) -> Grammar {
        let mut terminals = Vec::new();
        let mut nonterminals = Vec::new();
        for p in &productions {
            nonterminals.push(p.lhs.clone());
            for s in &p.rhs {
                match s {
                    Sym::T(t) => terminals.push(t.clone()),
                    Sym::N(n) => nonterminals.push(n.clone()),
                }
            }
        }
        Grammar::unchecked(terminals, nonterminals, productions, axioms.iter().map(|s| s.to_string()).collect())
    }

    /// Parses the text format without validation.
    pub fn parse_unchecked(source: &str) -> Result<Grammar, GrammarError> {
        parse_text(source)
    }

    /// Parses the text format and validates the result.
    pub fn parse(source: &str) -> Result<Grammar, GrammarError> {
        let g = parse_text(source)?;
        let report = g.validate();
        if report.is_empty() {
            Ok(g)
        } else {
            Err(GrammarError::Invalid(report))
        }
    }

    pub fn is_terminal(&self, s: &str) -> bool {
        self.terminals.iter().any(|t| t == s)
    }

    pub fn is_nonterminal(&self, s: &str) -> bool {
        self.nonterminals.iter().any(|t| t == s)
    }

    pub fn is_axiom(&self, s: &str) -> bool {
        self.axioms.iter().any(|t| t == s)
    }

    pub fn productions_of<'a>(&'a self, lhs: &'a str) -> impl Iterator<Item = &'a Production> + 'a {
        self.productions.iter().filter(move |p| p.lhs == lhs)
    }

    /// Every violation of the grammar invariants; empty iff the grammar is valid.
    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        let terms: BTreeSet<&str> = self.terminals.iter().map(|s| s.as_str()).collect();
        let nts: BTreeSet<&str> = self.nonterminals.iter().map(|s| s.as_str()).collect();
        for t in &self.terminals {
            if is_reserved(t) {
                r.push(ViolationKind::UnknownSymbol, None, format!("reserved symbol '{t}' used as terminal"));
            }
            if nts.contains(t.as_str()) {
                r.push(ViolationKind::UnknownSymbol, None, format!("'{t}' is both terminal and nonterminal"));
            }
        }
        for n in &self.nonterminals {
            if is_reserved(n) {
                r.push(ViolationKind::UnknownSymbol, None, format!("reserved symbol '{n}' used as nonterminal"));
            }
        }
        if self.axioms.is_empty() {
            r.push(ViolationKind::NoAxiom, None, "no axiom declared");
        }
        for a in &self.axioms {
            if !nts.contains(a.as_str()) {
                r.push(ViolationKind::UnknownSymbol, None, format!("axiom '{a}' is not a nonterminal"));
            }
        }
        let mut empty_rules = 0;
        for p in &self.productions {
            if !nts.contains(p.lhs.as_str()) {
                r.push(ViolationKind::UnknownSymbol, Some(p), format!("lhs '{}' is not a nonterminal", p.lhs));
            }
            for s in &p.rhs {
                match s {
                    Sym::T(t) if !terms.contains(t.as_str()) => {
                        r.push(ViolationKind::UnknownSymbol, Some(p), format!("undeclared terminal '{t}'"))
                    }
                    Sym::N(n) if !nts.contains(n.as_str()) => {
                        r.push(ViolationKind::UnknownSymbol, Some(p), format!("undeclared nonterminal '{n}'"))
                    }
                    _ => {}
                }
            }
            if p.rhs.windows(2).any(|w| w[0].is_nonterminal() && w[1].is_nonterminal()) {
                r.push(ViolationKind::OperatorFormViolation, Some(p), "two adjacent nonterminals");
            }
            if p.rhs.len() == 1 && p.rhs[0].is_nonterminal() {
                r.push(ViolationKind::RenamingRule, Some(p), "renaming rule");
            }
            if p.rhs.is_empty() {
                empty_rules += 1;
                let on_rhs = self.productions.iter().any(|q| q.rhs_nonterminals().any(|n| n == p.lhs));
                if !self.is_axiom(&p.lhs) || on_rhs || empty_rules > 1 {
                    r.push(
                        ViolationKind::EmptyRule,
                        Some(p),
                        "empty rule allowed only once, for an axiom absent from every rhs",
                    );
                }
            }
        }
        r
    }

    /// Serializes to the text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("terminals: {}\n", self.terminals.join(" ")));
        out.push_str(&format!("nonterminals: {}\n", self.nonterminals.join(" ")));
        out.push_str(&format!("axioms: {}\n", self.axioms.join(" ")));
        let mut order: Vec<&str> = Vec::new();
        for p in &self.productions {
            if !order.contains(&p.lhs.as_str()) {
                order.push(&p.lhs);
            }
        }
        for lhs in order {
            let alts: Vec<String> = self
                .productions_of(lhs)
                .map(|p| p.rhs.iter().map(|s| s.name()).collect::<Vec<_>>().join(" "))
                .collect();
            out.push_str(&format!("{} -> {} ;\n", lhs, alts.join(" | ")));
        }
        out
    }

    pub fn with_axioms(&self, axioms: &[&str]) -> Grammar {
        let mut g = self.clone();
        g.axioms = axioms.iter().map(|s| s.to_string()).collect();
        g
    }
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn dedup<T: Clone + Eq + std::hash::Hash>(v: Vec<T>) -> Vec<T> {
    let mut seen = std::collections::HashSet::new();
    v.into_iter().filter(|x| seen.insert(x.clone())).collect()
}

struct RuleText {
    line: usize,
    col: usize,
    text: String,
}

fn parse_text(source: &str) -> Result<Grammar, GrammarError> {
    let mut terminals: Option<Vec<String>> = None;
    let mut nonterminals: Option<Vec<String>> = None;
    let mut axioms: Vec<String> = Vec::new();
    let mut rules: Vec<RuleText> = Vec::new();
    let mut open: Option<RuleText> = None;

    for (i, raw) in source.lines().enumerate() {
        let line = i + 1;
        let body = match raw.find("//") {
            Some(k) => &raw[..k],
            None => raw,
        };
        let trimmed = body.trim();
        if trimmed.is_empty() {
            continue;
        }
        let col = body.len() - body.trim_start().len() + 1;
        if trimmed.starts_with('|') {
            match open.as_mut() {
                Some(r) => {
                    r.text.push(' ');
                    r.text.push_str(trimmed);
                }
                None => return Err(GrammarError::Syntax { line, col, msg: "alternative without a rule".into() }),
            }
        } else {
            if let Some(r) = open.take() {
                rules.push(r);
            }
            if let Some((key, rest)) = header(trimmed) {
                let syms: Vec<String> = rest.split_whitespace().map(|s| s.to_string()).collect();
                match key {
                    "terminals" => terminals.get_or_insert_with(Vec::new).extend(syms),
                    "nonterminals" => nonterminals.get_or_insert_with(Vec::new).extend(syms),
                    "axioms" => axioms.extend(syms),
                    other => return Err(GrammarError::Syntax { line, col, msg: format!("unknown header '{other}'") }),
                }
                continue;
            }
            if !trimmed.contains("->") {
                return Err(GrammarError::Syntax { line, col, msg: "expected a header or a rule 'A -> ...'".into() });
            }
            open = Some(RuleText { line, col, text: trimmed.to_string() });
        }
        if let Some(r) = open.as_ref() {
            if r.text.ends_with(';') {
                rules.push(open.take().unwrap());
            }
        }
    }
    if let Some(r) = open.take() {
        rules.push(r);
    }

    let declared_t: Option<BTreeSet<String>> = terminals.as_ref().map(|v| v.iter().cloned().collect());
    let declared_n: Option<BTreeSet<String>> = nonterminals.as_ref().map(|v| v.iter().cloned().collect());
    let classify = |s: &str| -> Sym {
        if let Some(n) = &declared_n {
            if n.contains(s) {
                return Sym::N(s.to_string());
            }
        }
        if let Some(t) = &declared_t {
            if t.contains(s) {
                return Sym::T(s.to_string());
            }
        }
        if declared_n.is_none() && s.chars().next().is_some_and(|c| c.is_uppercase()) {
            Sym::N(s.to_string())
        } else {
            Sym::T(s.to_string())
        }
    };

    let mut productions = Vec::new();
    let mut seen_t = Vec::new();
    let mut seen_n = Vec::new();
    for r in rules {
        let text = r.text.trim_end_matches(';').trim();
        let (lhs, rhs) = text.split_once("->").ok_or_else(|| GrammarError::Syntax {
            line: r.line,
            col: r.col,
            msg: "missing '->'".into(),
        })?;
        let lhs_syms: Vec<&str> = lhs.split_whitespace().collect();
        if lhs_syms.len() != 1 {
            return Err(GrammarError::Syntax { line: r.line, col: r.col, msg: "lhs must be a single symbol".into() });
        }
        if rhs.contains(';') {
            return Err(GrammarError::Syntax { line: r.line, col: r.col, msg: "stray ';' inside a rule".into() });
        }
        let lhs = lhs_syms[0].to_string();
        seen_n.push(lhs.clone());
        for alt in rhs.split('|') {
            let syms: Vec<Sym> = alt.split_whitespace().map(classify).collect();
            for s in &syms {
                match s {
                    Sym::T(t) => seen_t.push(t.clone()),
                    Sym::N(n) => seen_n.push(n.clone()),
                }
            }
            productions.push(Production { lhs: lhs.clone(), rhs: syms });
        }
    }
    let terminals = terminals.unwrap_or(seen_t);
    let nonterminals = match nonterminals {
        Some(mut n) => {
            // nonterminals used but not declared are reported by validation
            for s in seen_n {
                if !n.contains(&s) && !terminals.contains(&s) {
                    n.push(s);
                }
            }
            n
        }
        None => seen_n,
    };
    Ok(Grammar::unchecked(terminals, nonterminals, productions, axioms))
}

fn header(line: &str) -> Option<(&str, &str)> {
    let (key, rest) = line.split_once(':')?;
    let key = key.trim();
    if key.chars().all(|c| c.is_ascii_lowercase()) && !key.is_empty() && !line.contains("->") {
        Some((key, rest))
    } else {
        None
    }
}

/// Removes unproductive and unreachable nonterminals and unused terminals.
pub fn clean(g: &Grammar) -> Result<Grammar, GrammarError> {
    let mut productive: BTreeSet<&str> = BTreeSet::new();
    loop {
        let before = productive.len();
        for p in &g.productions {
            if p.rhs_nonterminals().all(|n| productive.contains(n)) {
                productive.insert(&p.lhs);
            }
        }
        if productive.len() == before {
            break;
        }
    }
    let axioms: Vec<String> = g.axioms.iter().filter(|a| productive.contains(a.as_str())).cloned().collect();
    if axioms.is_empty() {
        return Err(GrammarError::EmptyLanguage);
    }
    let useful_prods: Vec<&Production> = g
        .productions
        .iter()
        .filter(|p| productive.contains(p.lhs.as_str()) && p.rhs_nonterminals().all(|n| productive.contains(n)))
        .collect();
    let mut reachable: BTreeSet<&str> = axioms.iter().map(|s| s.as_str()).collect();
    let mut stack: Vec<&str> = reachable.iter().copied().collect();
    while let Some(a) = stack.pop() {
        for p in useful_prods.iter().filter(|p| p.lhs == a) {
            for n in p.rhs_nonterminals() {
                if reachable.insert(n) {
                    stack.push(n);
                }
            }
        }
    }
    let productions: Vec<Production> =
        useful_prods.into_iter().filter(|p| reachable.contains(p.lhs.as_str())).cloned().collect();
    let used_t: BTreeSet<&str> = productions
        .iter()
        .flat_map(|p| p.rhs.iter())
        .filter_map(|s| match s {
            Sym::T(t) => Some(t.as_str()),
            _ => None,
        })
        .collect();
    Ok(Grammar::unchecked(
        g.terminals.iter().filter(|t| used_t.contains(t.as_str())).cloned().collect(),
        g.nonterminals.iter().filter(|n| reachable.contains(n.as_str())).cloned().collect(),
        productions.clone(),
        axioms,
    ))
}

/// Terminal skeleton of a rhs: nonterminal slots replaced by `None`.
pub(crate) fn skeleton(rhs: &[Sym]) -> Vec<Option<String>> {
    rhs.iter()
        .map(|s| match s {
            Sym::T(t) => Some(t.clone()),
            Sym::N(_) => None,
        })
        .collect()
}

/// Name of an lhs-set nonterminal: a singleton keeps its plain name.
pub fn set_name(set: &BTreeSet<String>) -> String {
    if set.len() == 1 {
        set.iter().next().unwrap().clone()
    } else {
        format!("{{{}}}", set.iter().cloned().collect::<Vec<_>>().join(","))
    }
}

/// Backward-deterministic grammar built by the lhs-set construction, before reduction.
/// Each nonterminal is a set of original nonterminals.
pub(crate) struct BdGrammar {
    pub sets: Vec<BTreeSet<String>>,
    /// (skeleton, child set indices, lhs set index)
    pub rules: Vec<(Vec<Option<String>>, Vec<usize>, usize)>,
    pub empty_lhs: Option<usize>,
}

pub(crate) fn bd_construction(g: &Grammar) -> BdGrammar {
    let mut by_skel: BTreeMap<Vec<Option<String>>, Vec<&Production>> = BTreeMap::new();
    for p in &g.productions {
        if !p.rhs.is_empty() {
            by_skel.entry(skeleton(&p.rhs)).or_default().push(p);
        }
    }
    let mut sets: Vec<BTreeSet<String>> = Vec::new();
    let mut index: HashMap<BTreeSet<String>, usize> = HashMap::new();
    let mut rules: BTreeMap<(Vec<Option<String>>, Vec<usize>), usize> = BTreeMap::new();
    loop {
        let mut changed = false;
        for (skel, prods) in &by_skel {
            let arity = skel.iter().filter(|s| s.is_none()).count();
            let n = sets.len();
            let mut choice = vec![0usize; arity];
            if arity > 0 && n == 0 {
                continue;
            }
            loop {
                let key = (skel.clone(), choice.clone());
                if let std::collections::btree_map::Entry::Vacant(slot) = rules.entry(key) {
                    let lhs: BTreeSet<String> = prods
                        .iter()
                        .filter(|p| p.rhs_nonterminals().zip(&choice).all(|(nt, &c)| sets[c].contains(nt)))
                        .map(|p| p.lhs.clone())
                        .collect();
                    if !lhs.is_empty() {
                        let id = match index.get(&lhs) {
                            Some(&id) => id,
                            None => {
                                sets.push(lhs.clone());
                                index.insert(lhs, sets.len() - 1);
                                sets.len() - 1
                            }
                        };
                        slot.insert(id);
                        changed = true;
                    }
                }
                // odometer over the sets known at the start of this pass
                let mut k = 0;
                while k < arity {
                    choice[k] += 1;
                    if choice[k] < n {
                        break;
                    }
                    choice[k] = 0;
                    k += 1;
                }
                if k == arity {
                    break;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let empty_lhs = g.productions.iter().find(|p| p.rhs.is_empty()).map(|p| {
        let set: BTreeSet<String> = [p.lhs.clone()].into_iter().collect();
        match index.get(&set) {
            Some(&id) => id,
            None => {
                sets.push(set.clone());
                sets.len() - 1
            }
        }
    });
    BdGrammar { sets, rules: rules.into_iter().map(|((s, c), l)| (s, c, l)).collect(), empty_lhs }
}

fn fill_skeleton(skel: &[Option<String>], children: &[String]) -> Vec<Sym> {
    let mut it = children.iter();
    skel.iter()
        .map(|s| match s {
            Some(t) => Sym::T(t.clone()),
            None => Sym::N(it.next().expect("arity").clone()),
        })
        .collect()
}

/// Block of a nonterminal and its (skeleton, slot, sibling blocks, parent block) contexts.
type Signature = (usize, BTreeSet<(usize, usize, Vec<usize>, usize)>);

/// Backward-deterministic and reduced normal form.
///
/// Lhs-set construction for backward determinism, then state minimization of
/// the deterministic bottom-up tree recognizer it induces.
pub fn normalize_bdr(g: &Grammar) -> Result<Grammar, GrammarError> {
    let g = clean(g)?;
    let bd = bd_construction(&g);
    let n = bd.sets.len();
    let is_final: Vec<bool> = bd.sets.iter().map(|s| s.iter().any(|a| g.is_axiom(a))).collect();

    // partition refinement; a block signature collects, for every rule and
    // every slot holding the state, the block reached with the other slots fixed
    let mut block: Vec<usize> = is_final.iter().map(|&f| usize::from(f)).collect();
    if let Some(e) = bd.empty_lhs {
        // the empty rule's lhs never merges with anything else
        block[e] = 2;
    }
    loop {
        let mut sigs: Vec<Signature> = block.iter().map(|&b| (b, BTreeSet::new())).collect();
        for (ri, (_, children, lhs)) in bd.rules.iter().enumerate() {
            for (slot, &c) in children.iter().enumerate() {
                let ctx: Vec<usize> =
                    children.iter().enumerate().map(|(k, &x)| if k == slot { usize::MAX } else { block[x] }).collect();
                let skel_id = rule_skeleton_id(&bd, ri);
                sigs[c].1.insert((skel_id, slot, ctx, block[*lhs]));
            }
        }
        let mut ids: BTreeMap<&Signature, usize> = BTreeMap::new();
        let mut next = Vec::with_capacity(n);
        for sig in &sigs {
            let len = ids.len();
            next.push(*ids.entry(sig).or_insert(len));
        }
        let stable = ids.len() == count_blocks(&block);
        block = next;
        if stable {
            break;
        }
    }

    // merged names: union of lhs sets
    let nblocks = count_blocks(&block);
    let mut members: Vec<BTreeSet<String>> = vec![BTreeSet::new(); nblocks];
    let mut first_state: Vec<usize> = vec![usize::MAX; nblocks];
    for s in 0..n {
        members[block[s]].extend(bd.sets[s].iter().cloned());
        first_state[block[s]] = first_state[block[s]].min(s);
    }
    // order blocks by the first set discovered
    let mut order: Vec<usize> = (0..nblocks).collect();
    order.sort_by_key(|&b| first_state[b]);
    let mut names: Vec<String> = vec![String::new(); nblocks];
    let mut used: BTreeSet<String> = g.terminals.iter().cloned().collect();
    for &b in &order {
        let mut name = set_name(&members[b]);
        while used.contains(&name) {
            name.push('\'');
        }
        used.insert(name.clone());
        names[b] = name;
    }
    let mut productions = Vec::new();
    for (skel, children, lhs) in &bd.rules {
        let ch: Vec<String> = children.iter().map(|&c| names[block[c]].clone()).collect();
        productions.push(Production { lhs: names[block[*lhs]].clone(), rhs: fill_skeleton(skel, &ch) });
    }
    if let Some(e) = bd.empty_lhs {
        productions.push(Production { lhs: names[block[e]].clone(), rhs: vec![] });
    }
    productions.sort_by(|a, b| {
        let ka = order.iter().position(|&x| names[x] == a.lhs);
        let kb = order.iter().position(|&x| names[x] == b.lhs);
        ka.cmp(&kb)
    });
    let nonterminals: Vec<String> = order.iter().map(|&b| names[b].clone()).collect();
    let axioms: Vec<String> =
        order.iter().filter(|&&b| (0..n).any(|s| block[s] == b && is_final[s])).map(|&b| names[b].clone()).collect();
    let out = Grammar::unchecked(g.terminals.clone(), nonterminals, productions, axioms);
    clean(&out)
}

fn rule_skeleton_id(bd: &BdGrammar, ri: usize) -> usize {
    // rules with identical skeletons share an id
    let skel = &bd.rules[ri].0;
    bd.rules.iter().position(|r| &r.0 == skel).unwrap()
}

fn count_blocks(block: &[usize]) -> usize {
    block.iter().copied().collect::<BTreeSet<_>>().len()
}

/// A grammar whose every rhs is wrapped in the open/close markers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParGrammar {
    pub grammar: Grammar,
}

pub fn parenthesize_grammar(g: &Grammar) -> ParGrammar {
    let mut terminals = g.terminals.clone();
    terminals.push(OPEN.to_string());
    terminals.push(CLOSE.to_string());
    let productions = g
        .productions
        .iter()
        .map(|p| {
            let mut rhs = Vec::with_capacity(p.rhs.len() + 2);
            rhs.push(Sym::t(OPEN));
            rhs.extend(p.rhs.iter().cloned());
            rhs.push(Sym::t(CLOSE));
            Production { lhs: p.lhs.clone(), rhs }
        })
        .collect();
    ParGrammar { grammar: Grammar::unchecked(terminals, g.nonterminals.clone(), productions, g.axioms.clone()) }
}

/// Corpus grammars used by tests, examples and the CLI.
pub mod corpus {
    use super::Grammar;

    fn load(src: &str) -> Grammar {
        Grammar::parse(src).expect("corpus grammar")
    }

    /// Arithmetic expressions: E -> E+T | T*F | e ; T -> T*F | e ; F -> e.
    pub fn g_ae() -> Grammar {
        load("terminals: + * e\naxioms: E T F\nE -> E + T | T * F | e ;\nT -> T * F | e ;\nF -> e ;\n")
    }

    /// Counting language of odd equal powers.
    pub fn g_c() -> Grammar {
        load("terminals: a b\naxioms: O\nO -> a E b | a b ;\nE -> a O b ;\n")
    }

    pub fn g_nc() -> Grammar {
        load("terminals: a b c\naxioms: A\nA -> a B b | a b ;\nB -> a A c ;\n")
    }

    /// Equivalent to `g_c` but with a precedence conflict on (a,a).
    pub fn g_noop() -> Grammar {
        load("terminals: a b\naxioms: A\nA -> a a A b b | a b ;\n")
    }

    pub fn g_nl() -> Grammar {
        load("terminals: a b c\naxioms: A B\nA -> a B c A | a B c B | a c ;\nB -> b A c A | b A c B | b c ;\n")
    }

    /// Control language (aa)*d(bc)* for A.
    pub fn g_aadbc() -> Grammar {
        load("terminals: a b c d\naxioms: A\nA -> a B c | d ;\nB -> a A b ;\n")
    }

    /// Two paired descending/ascending counters of order 2 (terminal rule added on B).
    pub fn g_paired2() -> Grammar {
        load("terminals: a b\naxioms: A\nA -> a B b ;\nB -> a A b | a b ;\n")
    }

    /// Descending counters of order 3 paired with ascending counters of order 2.
    pub fn g_six() -> Grammar {
        load(
            "terminals: a b f g h e\naxioms: A1\n\
             A1 -> a A2 f | e ;\nA2 -> b A3 g ;\nA3 -> a A4 h ;\n\
             A4 -> b A5 f ;\nA5 -> a A6 g ;\nA6 -> b A1 h ;\n",
        )
    }

    pub fn g_cross() -> Grammar {
        load("terminals: a b c d h\naxioms: A B\nA -> a B c ;\nB -> a A b | a C b | h ;\nC -> d B b ;\n")
    }

    /// Grammar whose naive state collapsing creates spurious counters.
    pub fn g_pipe() -> Grammar {
        load("terminals: a b c d h\naxioms: A\nA -> a B c | h ;\nB -> a A d | b C d ;\nC -> b A d ;\n")
    }

    /// Every corpus grammar that is an OPG, with a short name.
    pub fn all() -> Vec<(&'static str, Grammar)> {
        vec![
            ("gae", g_ae()),
            ("gc", g_c()),
            ("gnc", g_nc()),
            ("gnl", g_nl()),
            ("aadbc", g_aadbc()),
            ("paired2", g_paired2()),
            ("six", g_six()),
            ("cross", g_cross()),
            ("pipe", g_pipe()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_gae_counts() {
        let g = corpus::g_ae();
        assert_eq!(g.nonterminals.len(), 3);
        assert_eq!(g.productions.len(), 6);
        assert_eq!(g.axioms, vec!["E", "T", "F"]);
    }

    #[test]
    fn operator_form_violation() {
        let err = Grammar::parse("terminals: a\naxioms: A\nA -> B C | a ;\nB -> a ;\nC -> a ;\n").unwrap_err();
        match err {
            GrammarError::Invalid(r) => assert!(r.has(ViolationKind::OperatorFormViolation)),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn renaming_rule() {
        let err = Grammar::parse("terminals: a\naxioms: A\nA -> B ;\nB -> a ;\n").unwrap_err();
        match err {
            GrammarError::Invalid(r) => assert!(r.has(ViolationKind::RenamingRule)),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn violations_are_exhaustive() {
        let src = "terminals: a\naxioms: A\nA -> B C | B | x ;\nB -> a ;\nC -> ;\n";
        let Err(GrammarError::Invalid(r)) = Grammar::parse(src) else { panic!() };
        assert!(r.has(ViolationKind::OperatorFormViolation));
        assert!(r.has(ViolationKind::RenamingRule));
        assert!(r.has(ViolationKind::UnknownSymbol));
        assert!(r.has(ViolationKind::EmptyRule));
    }

    #[test]
    fn no_axiom() {
        let Err(GrammarError::Invalid(r)) = Grammar::parse("A -> a ;") else { panic!() };
        assert!(r.has(ViolationKind::NoAxiom));
    }

    #[test]
    fn empty_rule_on_fresh_axiom_is_accepted() {
        assert!(Grammar::parse("axioms: S\nS -> ;\nS -> a ;").is_ok());
    }

    #[test]
    fn syntax_error_has_position() {
        let err = Grammar::parse("terminals: a\n  A a ;\n").unwrap_err();
        match err {
            GrammarError::Syntax { line, col, .. } => assert_eq!((line, col), (2, 3)),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn multi_line_rules_and_comments() {
        let g = Grammar::parse("// comment\naxioms: A\nA -> a B // first\n  | b ;\nB -> c\n").unwrap();
        assert_eq!(g.productions.len(), 3);
    }

    #[test]
    fn text_round_trip() {
        for (_, g) in corpus::all() {
            let back = Grammar::parse(&g.to_text()).unwrap();
            assert_eq!(back, g);
        }
    }

    #[test]
    fn json_round_trip() {
        let g = corpus::g_nl();
        let s = serde_json::to_string(&g).unwrap();
        let back: Grammar = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn clean_keeps_gae() {
        assert_eq!(clean(&corpus::g_ae()).unwrap(), corpus::g_ae());
    }

    #[test]
    fn clean_drops_unreachable_and_unproductive() {
        let g = Grammar::parse(
            "terminals: + * e a b\naxioms: E T F\nE -> E + T | T * F | e ;\nT -> T * F | e ;\nF -> e ;\nX -> e ;\nY -> a Y b ;\nE -> a Y ;\n",
        )
        .unwrap();
        let c = clean(&g).unwrap();
        assert!(!c.is_nonterminal("X"));
        assert!(!c.is_nonterminal("Y"));
        assert_eq!(c.productions.len(), 6);
        assert_eq!(c.terminals, vec!["+", "*", "e"]);
    }

    #[test]
    fn clean_empty_language() {
        let g = Grammar::parse("axioms: A\nA -> a A ;").unwrap();
        assert!(matches!(clean(&g), Err(GrammarError::EmptyLanguage)));
    }

    #[test]
    fn bdr_of_gc_is_isomorphic() {
        let g = corpus::g_c();
        assert_eq!(normalize_bdr(&g).unwrap(), g);
    }

    #[test]
    fn bdr_of_gae_has_three_lhs_sets() {
        let b = normalize_bdr(&corpus::g_ae()).unwrap();
        assert_eq!(b.nonterminals, vec!["{E,F,T}", "{E,T}", "E"]);
        assert_eq!(b.productions.len(), 1 + 6 + 2);
        assert!(b.productions.contains(&Production::new("{E,F,T}", vec![Sym::t("e")])));
        assert!(b
            .productions
            .contains(&Production::new("{E,T}", vec![Sym::n("{E,T}"), Sym::t("*"), Sym::n("{E,F,T}")])));
        assert_eq!(b.axioms.len(), 3);
    }

    #[test]
    fn bdr_merges_duplicates_in_identical_contexts() {
        let g = Grammar::parse("axioms: S\nS -> x A y | x B y ;\nA -> a b ;\nB -> a b ;").unwrap();
        let b = normalize_bdr(&g).unwrap();
        assert_eq!(b.nonterminals, vec!["{A,B}", "S"]);
        assert_eq!(b.productions.len(), 2);
    }

    #[test]
    fn bdr_keeps_lhs_set_in_different_contexts() {
        let g = Grammar::parse("axioms: S\nS -> x A y | z B z ;\nA -> a b ;\nB -> a b ;").unwrap();
        let b = normalize_bdr(&g).unwrap();
        assert!(b.is_nonterminal("{A,B}"));
        assert_eq!(b.productions.len(), 3);
    }

    #[test]
    fn bdr_is_idempotent_on_gnl() {
        let g = corpus::g_nl();
        assert_eq!(normalize_bdr(&g).unwrap(), g);
    }

    #[test]
    fn parenthesize_wraps_every_rhs() {
        let g = Grammar::parse("axioms: A\nA -> a b ;").unwrap();
        let p = parenthesize_grammar(&g);
        assert_eq!(p.grammar.productions[0].rhs, vec![Sym::t(OPEN), Sym::t("a"), Sym::t("b"), Sym::t(CLOSE)]);
        let nl = corpus::g_nl();
        assert_eq!(parenthesize_grammar(&nl).grammar.productions.len(), nl.productions.len());
        assert_eq!(parenthesize_grammar(&nl).grammar.axioms, nl.axioms);
    }
}
