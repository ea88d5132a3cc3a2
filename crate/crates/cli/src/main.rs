//! `opal`: command-line front end for the operator-precedence toolkit.
//!
//! Exit codes: 0 success or property holds, 1 property fails or the word is
//! rejected, 2 usage or input error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use opal::control_graph::{build_control_graph, control_language, ControlGraph, State};
use opal::grammar::{clean, normalize_bdr, parenthesize_grammar, Grammar};
use opal::logic::{eval_on_word, parse_formula};
use opal::noncounting::{
    is_noncounting_opl_with, pump_oracle_naive, pump_oracle_parenthesized_with, NcStatus, NcVerdict, DEFAULT_MAXLEN,
    DEFAULT_PUMP_N,
};
use opal::ope::{flat_normal_form, ope_to_fo, OpeContext};
use opal::opm::{compute_opm, OpMatrix};
use opal::parser::{member_grammar, parse_max, tokenize, Membership, Reject, DEFAULT_BUDGET};
use opal::regular::{determinize_minimize, is_aperiodic_dfa};
use opal::regular_control::{PsiMode, RegularControl};
use opal::transform::{build_hat, find_counter_tables, find_paired_counters, linearize, transform, CycleLimits};
use opal::verify::{verify_all, VerifyConfig};

#[derive(Parser)]
#[command(name = "opal", version, about = "Operator-precedence languages toolkit")]
struct Cli {
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Write a DOT rendering of the main graph or tree to this file.
    #[arg(long, global = true, value_name = "PATH")]
    dot: Option<PathBuf>,
    /// Length bound for enumerations.
    #[arg(long, global = true)]
    maxlen: Option<usize>,
    /// Enumeration and search budget.
    #[arg(long, global = true, env = "OPAL_BUDGET")]
    budget: Option<usize>,
    /// Seed for sampled property suites.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Precedence matrices.
    #[command(subcommand)]
    Opm(OpmCmd),
    /// Parse a string with a matrix or a grammar.
    Parse(ParseArgs),
    /// Operator-precedence expressions.
    #[command(subcommand)]
    Ope(OpeCmd),
    /// Grammar transformations and checks.
    #[command(subcommand)]
    Grammar(GrammarCmd),
    /// Control graphs.
    #[command(subcommand)]
    Cg(CgCmd),
    /// The counter-elimination pipeline.
    #[command(subcommand)]
    Transform(TransformCmd),
    /// Noncounting verdicts.
    #[command(subcommand)]
    Nc(NcCmd),
    /// Formula evaluation.
    #[command(subcommand)]
    Logic(LogicCmd),
    /// Invariant suites.
    #[command(subcommand)]
    Verify(VerifyCmd),
}

#[derive(Subcommand)]
enum OpmCmd {
    /// Compute the matrix of a grammar and report conflicts.
    Compute { grammar: PathBuf },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Matrix file (table or JSON).
    #[arg(long)]
    opm: Option<PathBuf>,
    /// Grammar file.
    #[arg(long)]
    grammar: Option<PathBuf>,
}

#[derive(Args)]
struct ParseArgs {
    #[command(flatten)]
    source: Source,
    /// Input, tokenized on whitespace or by longest match.
    input: String,
}

#[derive(Args)]
struct OpeArgs {
    /// Matrix file (table or JSON).
    #[arg(long)]
    opm: PathBuf,
    /// Expression text or a file containing it.
    expr: String,
}

#[derive(Subcommand)]
enum OpeCmd {
    /// Membership of a string.
    Eval {
        #[command(flatten)]
        e: OpeArgs,
        input: String,
    },
    /// Bounded enumeration.
    Enum {
        #[command(flatten)]
        e: OpeArgs,
    },
    /// Flat normal form.
    Fnf {
        #[command(flatten)]
        e: OpeArgs,
    },
    /// Equivalent first-order formula.
    ToFo {
        #[command(flatten)]
        e: OpeArgs,
    },
}

#[derive(Subcommand)]
enum GrammarCmd {
    Validate { grammar: PathBuf },
    Clean { grammar: PathBuf },
    Bdr { grammar: PathBuf },
    Parenthesize { grammar: PathBuf },
    Linearize { grammar: PathBuf },
}

#[derive(Args)]
struct GraphArgs {
    grammar: PathBuf,
    /// Use the grammar as given instead of its linearization.
    #[arg(long)]
    raw: bool,
}

#[derive(Subcommand)]
enum CgCmd {
    /// Control graph edges.
    Build {
        grammar: PathBuf,
        /// Build the graph of the linearized grammar.
        #[arg(long)]
        linear: bool,
    },
    /// The control language of a nonterminal.
    Lang {
        grammar: PathBuf,
        nonterminal: String,
        #[arg(long)]
        linear: bool,
    },
    /// Counter tables and pairings.
    Counters {
        #[command(flatten)]
        g: GraphArgs,
    },
}

#[derive(Subcommand)]
enum TransformCmd {
    /// Table-indexed state splitting.
    Hat { grammar: PathBuf },
    /// Pipelines and counter-sequence states.
    Bar { grammar: PathBuf },
    /// The pair grammar.
    Gprime {
        grammar: PathBuf,
        /// Write the grammar file here.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum NcCmd {
    /// Combined structural and pump-oracle verdict.
    Check {
        grammar: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PUMP_N)]
        pump_n: usize,
        /// Pump oracle only.
        #[arg(long, conflicts_with = "naive")]
        oracle: bool,
        /// Pump oracle on the unparenthesized language.
        #[arg(long)]
        naive: bool,
    },
}

#[derive(Subcommand)]
enum LogicCmd {
    /// Evaluate a closed formula on a string.
    Eval {
        #[arg(long)]
        opm: PathBuf,
        /// Formula text or a file containing it.
        formula: String,
        input: String,
    },
    /// Decide membership through control automata and the logic check.
    RegularControl {
        #[arg(long)]
        grammar: PathBuf,
        input: String,
        /// Check one nonterminal instead of the sentence.
        #[arg(long)]
        nonterminal: Option<String>,
        /// Print the formula of the nonterminal.
        #[arg(long, requires = "nonterminal")]
        formula: bool,
    },
}

#[derive(Subcommand)]
enum VerifyCmd {
    /// Every invariant suite on one grammar.
    All {
        grammar: PathBuf,
        /// Word length for the membership suites.
        #[arg(long, default_value_t = 6)]
        words: usize,
    },
}

/// Result of one command: what to print and how to exit.
struct Outcome {
    text: String,
    json: Value,
    dot: Option<String>,
    code: u8,
}

impl Outcome {
    fn new(text: String, json: Value) -> Outcome {
        Outcome { text, json, dot: None, code: 0 }
    }

    fn code(mut self, code: u8) -> Outcome {
        self.code = code;
        self
    }

    fn dot(mut self, dot: String) -> Outcome {
        self.dot = Some(dot);
        self
    }
}

type Res = Result<Outcome, String>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            if let (Some(path), Some(dot)) = (&cli.dot, &out.dot) {
                if let Err(e) = fs::write(path, dot) {
                    eprintln!("opal: cannot write {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            }
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&out.json).expect("json"));
            } else {
                print!("{}", out.text);
            }
            ExitCode::from(out.code)
        }
        Err(msg) => {
            eprintln!("opal: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Res {
    let budget = cli.budget.unwrap_or(DEFAULT_BUDGET);
    match &cli.cmd {
        Cmd::Opm(OpmCmd::Compute { grammar }) => opm_compute(&load_grammar_lenient(grammar)?),
        Cmd::Parse(a) => parse_cmd(a),
        Cmd::Ope(c) => ope_cmd(c, cli.maxlen.unwrap_or(6)),
        Cmd::Grammar(c) => grammar_cmd(c),
        Cmd::Cg(c) => cg_cmd(c, cli.maxlen.unwrap_or(6), budget),
        Cmd::Transform(c) => transform_cmd(c, budget),
        Cmd::Nc(NcCmd::Check { grammar, pump_n, oracle, naive }) => {
            let g = load_grammar(grammar)?;
            let maxlen = cli.maxlen.unwrap_or(DEFAULT_MAXLEN);
            let v = if *naive {
                pump_oracle_naive(&g, *pump_n, maxlen)
            } else if *oracle {
                pump_oracle_parenthesized_with(&g, *pump_n, maxlen, budget)
            } else {
                is_noncounting_opl_with(&g, *pump_n, maxlen, budget)
            };
            Ok(Outcome::new(render_verdict(&v), to_json(&v)))
        }
        Cmd::Logic(c) => logic_cmd(c),
        Cmd::Verify(VerifyCmd::All { grammar, words }) => {
            let g = load_grammar_lenient(grammar)?;
            let cfg = VerifyConfig {
                maxlen: cli.maxlen.unwrap_or(12),
                word_len: *words,
                budget,
                seed: cli.seed,
                ..VerifyConfig::default()
            };
            let checks = verify_all(&g, &cfg);
            let mut text = String::new();
            for c in &checks {
                let status = if c.passed { "PASS" } else { "FAIL" };
                text.push_str(&format!("{status} {}: {}\n", c.name, c.detail));
            }
            let ok = checks.iter().all(|c| c.passed);
            Ok(Outcome::new(text, to_json(&checks)).code(if ok { 0 } else { 1 }))
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

/// Text or JSON grammar, validated.
fn load_grammar(path: &Path) -> Result<Grammar, String> {
    let g = load_grammar_lenient(path)?;
    let report = g.validate();
    if report.is_empty() {
        Ok(g)
    } else {
        Err(format!("{}: invalid grammar:\n{report}", path.display()))
    }
}

fn load_grammar_lenient(path: &Path) -> Result<Grammar, String> {
    let src = read(path)?;
    if src.trim_start().starts_with('{') {
        serde_json::from_str(&src).map_err(|e| format!("{}: {e}", path.display()))
    } else {
        Grammar::parse_unchecked(&src).map_err(|e| format!("{}: {e}", path.display()))
    }
}

fn load_matrix(path: &Path) -> Result<OpMatrix, String> {
    let src = read(path)?;
    if src.trim_start().starts_with('{') {
        serde_json::from_str(&src).map_err(|e| format!("{}: {e}", path.display()))
    } else {
        OpMatrix::from_table(&src).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// The argument itself, or the contents of the file it names.
fn text_or_file(arg: &str) -> Result<String, String> {
    let p = Path::new(arg);
    if p.is_file() {
        Ok(read(p)?.trim().to_string())
    } else {
        Ok(arg.to_string())
    }
}

fn tokens(input: &str, alphabet: &[String]) -> Result<Vec<String>, String> {
    tokenize(input, alphabet).map_err(|e| e.to_string())
}

fn reject_text(r: &Reject) -> String {
    match r {
        Reject::NoRelation { a, b, pos } => format!("no relation ({a},{b}) at {pos}"),
        other => other.to_string(),
    }
}

fn opm_compute(g: &Grammar) -> Res {
    let r = compute_opm(g);
    let mut text = r.matrix.to_table();
    for c in &r.conflicts {
        let ws: Vec<String> = c.witnesses.iter().map(|(rel, p)| format!("{} by {p}", rel.symbol())).collect();
        text.push_str(&format!("conflict ({},{}): {}\n", c.row, c.col, ws.join("; ")));
    }
    let code = if r.conflicts.is_empty() { 0 } else { 1 };
    Ok(Outcome::new(text, to_json(&r)).code(code))
}

fn parse_cmd(a: &ParseArgs) -> Res {
    if let Some(path) = &a.source.opm {
        let m = load_matrix(path)?;
        let w = tokens(&a.input, m.alphabet())?;
        return Ok(match parse_max(&w, &m) {
            Ok(t) => {
                let paren = t.parenthesized_with("(", ")");
                let chords: Vec<String> = t.chords().iter().map(|(i, j)| format!("({i},{j})")).collect();
                let text = format!("{paren}\nchords: {}\n", chords.join(" "));
                let json = json!({ "word": w, "parenthesized": paren, "chords": t.chords(), "tree": t });
                Outcome::new(text, json).dot(t.to_dot())
            }
            Err(r) => Outcome::new(format!("{}\n", reject_text(&r)), json!({ "word": w, "rejected": r })).code(1),
        });
    }
    let path = a.source.grammar.as_ref().expect("clap group");
    let g = load_grammar(path)?;
    let w = tokens(&a.input, &g.terminals)?;
    let m = member_grammar(&w, &g).map_err(|e| e.to_string())?;
    Ok(match m {
        Membership::Member(lt) => {
            let paren = lt.tree.parenthesized_with("(", ")");
            let text = format!("{paren}\n{}\n", lt.to_labeled_string());
            let json = json!({ "word": w, "member": true, "parenthesized": paren, "tree": lt });
            Outcome::new(text, json).dot(lt.tree.to_dot())
        }
        Membership::EmptyWord => Outcome::new("member (empty word)\n".into(), json!({ "word": w, "member": true })),
        Membership::NotDerived(t) => {
            let paren = t.parenthesized_with("(", ")");
            Outcome::new(
                format!("{paren}\nnot derived from an axiom\n"),
                json!({ "word": w, "member": false, "parenthesized": paren }),
            )
            .code(1)
        }
        Membership::Rejected(r) => {
            Outcome::new(format!("{}\n", reject_text(&r)), json!({ "word": w, "member": false, "rejected": r })).code(1)
        }
    })
}

fn ope_cmd(c: &OpeCmd, maxlen: usize) -> Res {
    let args = match c {
        OpeCmd::Eval { e, .. } | OpeCmd::Enum { e } | OpeCmd::Fnf { e } | OpeCmd::ToFo { e } => e,
    };
    let m = load_matrix(&args.opm)?;
    let ctx = OpeContext::partial(m.clone()).map_err(|e| e.to_string())?;
    let src = text_or_file(&args.expr)?;
    let e = ctx.parse(&src).map_err(|e| e.to_string())?;
    match c {
        OpeCmd::Eval { input, .. } => {
            let w = tokens(input, ctx.alphabet())?;
            let v = ctx.member(&w, &e).map_err(|e| e.to_string())?;
            Ok(Outcome::new(format!("{v}\n"), json!({ "word": w, "member": v })).code(if v { 0 } else { 1 }))
        }
        OpeCmd::Enum { .. } => {
            let words = ctx.enumerate(&e, maxlen).map_err(|e| e.to_string())?;
            let text: String =
                words.iter().map(|w| format!("{}\n", if w.is_empty() { "ε".into() } else { w.join(" ") })).collect();
            Ok(Outcome::new(text, json!({ "maxlen": maxlen, "words": words })))
        }
        OpeCmd::Fnf { .. } => {
            let f = flat_normal_form(&e, &m).map_err(|e| e.to_string())?;
            Ok(Outcome::new(format!("{f}\n"), json!({ "expression": e.to_string(), "fnf": f.to_string() })))
        }
        OpeCmd::ToFo { .. } => {
            let f = ope_to_fo(&e, &m).map_err(|e| e.to_string())?;
            Ok(Outcome::new(format!("{f}\n"), json!({ "expression": e.to_string(), "formula": f.to_string() })))
        }
    }
}

fn grammar_out(g: &Grammar) -> Outcome {
    Outcome::new(g.to_text(), to_json(g))
}

fn grammar_cmd(c: &GrammarCmd) -> Res {
    match c {
        GrammarCmd::Validate { grammar } => {
            let g = load_grammar_lenient(grammar)?;
            let r = g.validate();
            let text = if r.is_empty() { "valid\n".to_string() } else { r.to_string() };
            let code = if r.is_empty() { 0 } else { 1 };
            Ok(Outcome::new(text, to_json(&r)).code(code))
        }
        GrammarCmd::Clean { grammar } => Ok(grammar_out(&clean(&load_grammar(grammar)?).map_err(|e| e.to_string())?)),
        GrammarCmd::Bdr { grammar } => {
            Ok(grammar_out(&normalize_bdr(&load_grammar(grammar)?).map_err(|e| e.to_string())?))
        }
        GrammarCmd::Parenthesize { grammar } => Ok(grammar_out(&parenthesize_grammar(&load_grammar(grammar)?).grammar)),
        GrammarCmd::Linearize { grammar } => Ok(grammar_out(&linearize(&load_grammar(grammar)?).grammar)),
    }
}

fn graph_text(cg: &ControlGraph) -> String {
    let mut text = format!("{} states, {} edges\n", cg.states.len(), cg.edges.len());
    for (x, l, y) in cg.named_transitions() {
        let l = if l.is_empty() { "ε".to_string() } else { l };
        text.push_str(&format!("{x} -{l}-> {y}\n"));
    }
    text
}

fn graph_out(cg: &ControlGraph) -> Outcome {
    Outcome::new(graph_text(cg), to_json(cg)).dot(cg.to_dot())
}

fn grammar_for_graph(path: &Path, linear: bool) -> Result<Grammar, String> {
    let g = load_grammar(path)?;
    Ok(if linear { linearize(&g).grammar } else { g })
}

fn cg_cmd(c: &CgCmd, maxlen: usize, budget: usize) -> Res {
    match c {
        CgCmd::Build { grammar, linear } => Ok(graph_out(&build_control_graph(&grammar_for_graph(grammar, *linear)?))),
        CgCmd::Lang { grammar, nonterminal, linear } => {
            let g = grammar_for_graph(grammar, *linear)?;
            let cg = build_control_graph(&g);
            let (d, u) = match (cg.index(&State::down(nonterminal)), cg.index(&State::up(nonterminal))) {
                (Some(d), Some(u)) => (d, u),
                _ => return Err(format!("unknown nonterminal '{nonterminal}'")),
            };
            let dfa = determinize_minimize(&control_language(&cg, d, u)).map_err(|e| e.to_string())?;
            let aperiodic = is_aperiodic_dfa(&dfa).map_err(|e| e.to_string())?;
            let words: Vec<String> = dfa.words_up_to(maxlen).iter().map(|w| dfa.render(w)).collect();
            let mut text = format!("states: {}\naperiodic: {aperiodic}\n", dfa.size());
            for w in &words {
                text.push_str(&format!("{}\n", if w.is_empty() { "ε" } else { w }));
            }
            let json = json!({ "nonterminal": nonterminal, "aperiodic": aperiodic, "words": words, "dfa": dfa });
            Ok(Outcome::new(text, json))
        }
        CgCmd::Counters { g } => {
            let grammar = load_grammar(&g.grammar)?;
            let lg = linearize(&grammar);
            let target = if g.raw { grammar.clone() } else { lg.grammar.clone() };
            let cg = build_control_graph(&target);
            let limits = CycleLimits { budget, ..CycleLimits::default() };
            let tables = find_counter_tables(&cg, &limits).map_err(|e| e.to_string())?;
            let pairings = if g.raw { Vec::new() } else { find_paired_counters(&lg, &tables) };
            let mut text = String::new();
            for t in &tables {
                text.push_str(&format!(
                    "T[{}] {} k={} j={}\n{}",
                    t.index,
                    t.render_reference(),
                    t.k,
                    t.j,
                    t.render_grid()
                ));
            }
            for p in &pairings {
                text.push_str(&format!(
                    "paired T[{}] (order {}) with T[{}] (order {}), coprime: {}\n",
                    p.desc,
                    p.desc_order,
                    p.asc,
                    p.asc_order,
                    p.coprime()
                ));
            }
            if tables.is_empty() {
                text.push_str("no counter tables\n");
            }
            Ok(Outcome::new(text, json!({ "tables": tables, "pairings": pairings })))
        }
    }
}

fn transform_cmd(c: &TransformCmd, budget: usize) -> Res {
    let limits = CycleLimits { budget, ..CycleLimits::default() };
    let path = match c {
        TransformCmd::Hat { grammar } | TransformCmd::Bar { grammar } | TransformCmd::Gprime { grammar, .. } => grammar,
    };
    let g = load_grammar(path)?;
    let p = transform(&g, &limits).map_err(|e| e.to_string())?;
    match c {
        TransformCmd::Hat { .. } => Ok(graph_out(&build_hat(&p.graph, &p.tables))),
        TransformCmd::Bar { .. } => Ok(graph_out(&p.bar)),
        TransformCmd::Gprime { output, .. } => {
            let text = p.gprime.grammar.to_text();
            if let Some(out) = output {
                fs::write(out, &text).map_err(|e| format!("cannot write {}: {e}", out.display()))?;
            }
            Ok(Outcome::new(text, to_json(&p.gprime)).dot(p.gprime.control_graph().to_dot()))
        }
    }
}

fn render_verdict(v: &NcVerdict) -> String {
    let status = match v.status {
        NcStatus::Noncounting => "noncounting",
        NcStatus::Counting => "counting",
        NcStatus::Unknown => "unknown",
    };
    let mut text = format!("status: {status}\nexact: {}\n", v.exact);
    if let Some(w) = &v.witness {
        text.push_str(&format!("witness: {}\n", w.render()));
    }
    if let Some(s) = &v.structural {
        text.push_str(&format!("counter tables: {}\n", s.tables));
        for p in &s.pairings {
            text.push_str(&format!(
                "pairing {} / {} orders {}/{} coprime {}\n  derivation from {}: {}\n",
                p.desc,
                p.asc,
                p.desc_order,
                p.asc_order,
                p.coprime,
                p.start,
                p.derivation.join("; ")
            ));
        }
    }
    let b = &v.bounds;
    text.push_str(&format!(
        "bounds: n={} maxlen={} sentences={} factorizations={} tests={}{}\n",
        b.pump_n,
        b.maxlen,
        b.sentences,
        b.factorizations,
        b.tests,
        if b.exhausted { " (budget exhausted)" } else { "" }
    ));
    text
}

fn logic_cmd(c: &LogicCmd) -> Res {
    match c {
        LogicCmd::Eval { opm, formula, input } => {
            let m = load_matrix(opm)?;
            let f = parse_formula(&text_or_file(formula)?).map_err(|e| e.to_string())?;
            let w = tokens(input, m.alphabet())?;
            let v = eval_on_word(&f, &w, &m).map_err(|e| e.to_string())?;
            Ok(Outcome::new(format!("{v}\n"), json!({ "word": w, "holds": v })).code(if v { 0 } else { 1 }))
        }
        LogicCmd::RegularControl { grammar, input, nonterminal, formula } => {
            let g = load_grammar(grammar)?;
            let rc = RegularControl::new(&g).map_err(|e| e.to_string())?;
            let w = tokens(input, &g.terminals)?;
            // a word the matrix cannot parse belongs to no L(A)
            let (label, v) = match nonterminal {
                Some(a) => {
                    if !g.is_nonterminal(a) {
                        return Err(format!("unknown nonterminal '{a}'"));
                    }
                    (a.clone(), rc.check(&w, a, PsiMode::Literal).unwrap_or(false))
                }
                None => ("sentence".to_string(), rc.chi(&w, PsiMode::Typed).unwrap_or(false)),
            };
            let mut text = format!("{label}: {v}\n");
            let mut json = json!({ "word": w, "target": label, "holds": v });
            if *formula {
                let f = rc.psi_formula(nonterminal.as_deref().unwrap_or_default()).to_string();
                text.push_str(&format!("{f}\n"));
                json["formula"] = Value::String(f);
            }
            Ok(Outcome::new(text, json).code(if v { 0 } else { 1 }))
        }
    }
}
