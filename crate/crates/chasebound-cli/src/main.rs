use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use chasebound::chase::{chase, ChaseTrace, Stop, DEFAULT_DEPTH, DEFAULT_ELEMENTS};
use chasebound::coloring::{natural_coloring, Coloring};
use chasebound::dump::{ColoringDump, QuotientDump, TraceDump};
use chasebound::program::{normalize_heads, parse_program, Program, Theory};
use chasebound::querynorm::{classify, measure, normalize_step, QueryGraph, Shape};
use chasebound::rewrite::{bdd_probe, rewrite_ucq, Probe, DEFAULT_STEPS};
use chasebound::synth::{explain, extract_skeleton, synthesize, verify_model, Artifact, Outcome, Skeleton, SynthConfig};
use chasebound::transforms::{binarize_heads, guarded_to_binary, multihead_encode, ternarize, TransformReport};
use chasebound::types::{
    build_catalog, check_conservative, fingerprint, quotient, show_pattern, type_bound, Conservativity, QuotientMap,
    Region, DEFAULT_MAX_CATALOG,
};
use chasebound::{ConjunctiveQuery, Error, Signature, Structure};

/// Chase, rewriting, quotients and finite-model synthesis for binary
/// existential rules.
#[derive(Parser, Debug)]
#[command(name = "chasebound", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Args, Debug)]
struct Opts {
    /// Chase depth.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(0..=100_000))]
    depth: Option<u64>,
    /// Size of the types that must survive the quotient.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..=8))]
    m: Option<u64>,
    /// Quotient bound.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..=64))]
    n: Option<u64>,
    /// Number of hues in the coloring.
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..=64))]
    period: Option<u32>,
    #[arg(long, global = true)]
    element_budget: Option<usize>,
    /// Rewriting rounds per rule body.
    #[arg(long, global = true)]
    step_budget: Option<usize>,
    /// Print JSON instead of the line format.
    #[arg(long, global = true)]
    json: bool,
    /// Seeds the choice of normalization candidates.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Cap on pattern catalogs.
    #[arg(long, global = true, env = "CHASEBOUND_MAX_CATALOG", default_value_t = DEFAULT_MAX_CATALOG)]
    max_catalog: usize,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Print the chase trace.
    Chase { file: PathBuf },
    /// Rewrite the program's query into a UCQ.
    Rewrite { file: PathBuf },
    /// Rewrite every rule body and report whether all terminate.
    BddCheck { file: PathBuf },
    /// Largest variable count in the rewritings of the rule bodies.
    Kappa { file: PathBuf },
    /// Database and TGP atoms of the chase prefix.
    Skeleton { file: PathBuf },
    /// Natural coloring of the skeleton.
    Color { file: PathBuf },
    /// Quotient of the colored skeleton.
    Quotient {
        file: PathBuf,
        /// Quotient the skeleton without coloring it.
        #[arg(long)]
        plain: bool,
    },
    /// Check that the quotient adds no positive types of size m.
    Conservative {
        file: PathBuf,
        /// Also compare uncolored pattern fingerprints element by element.
        #[arg(long)]
        fingerprints: bool,
    },
    /// Search for a certified finite model avoiding the query.
    Synth { file: PathBuf },
    /// Check a model against the program's theory, data and query.
    Verify { file: PathBuf, model: PathBuf },
    /// Classify the program's query and list its normalization candidates.
    NormalizeQuery {
        file: PathBuf,
        /// Follow randomly picked candidates for this many steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Compile the program into another shape.
    Transform { kind: Kind, file: PathBuf },
    /// Summarize a certificate or failure report.
    Explain { artifact: PathBuf },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Kind {
    #[value(name = "binarize-heads")]
    BinarizeHeads,
    Ternarize,
    Multihead,
    #[value(name = "guarded2bin")]
    Guarded2bin,
}

const OK: u8 = 0;
const NEGATIVE: u8 = 1;
const INPUT: u8 = 2;
const BUDGET: u8 = 3;

struct Done {
    text: String,
    json: Value,
    code: u8,
}

impl Done {
    fn ok(text: String, json: Value) -> Done {
        Done { text, json, code: OK }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Resource(_)) | Some(Error::ExtendPrefix(_)) => BUDGET,
        _ => INPUT,
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load(path: &Path) -> anyhow::Result<Program> {
    let text = read(path)?;
    parse_program(&text).map_err(|e| anyhow::Error::new(e).context(format!("in {}", path.display())))
}

fn need_query(p: &Program) -> anyhow::Result<&ConjunctiveQuery> {
    p.query.as_ref().ok_or_else(|| Error::Input("the program has no query: section".into()).into())
}

/// Pipeline parameters with unset coordinates filled in from `m`.
struct Params {
    m: usize,
    n: usize,
    depth: usize,
    period: u32,
    elements: usize,
}

impl Opts {
    fn params(&self) -> Params {
        let m = self.m.unwrap_or(2) as usize;
        let n = self.n.map_or(m + 2, |n| n as usize);
        Params {
            m,
            n,
            depth: self.depth.map_or(2 * (n + m), |d| d as usize),
            period: self.period.unwrap_or(m as u32 + 1),
            elements: self.element_budget.unwrap_or(DEFAULT_ELEMENTS),
        }
    }

    fn steps(&self) -> usize {
        self.step_budget.unwrap_or(DEFAULT_STEPS)
    }
}

fn skeleton(p: &Program, par: &Params) -> anyhow::Result<(Skeleton, ChaseTrace)> {
    let t = normalize_heads(&p.theory)?;
    let d = p.data.clone().upgrade(t.sig.clone())?;
    let tr = chase(&d, &t, par.depth, par.elements);
    if tr.stop == Stop::Elements {
        return Err(Error::Resource(format!("element budget {} reached", par.elements)).into());
    }
    Ok((extract_skeleton(&tr, &d, &t)?, tr))
}

fn colored(p: &Program, par: &Params) -> anyhow::Result<(Skeleton, ChaseTrace, Coloring)> {
    let (s, tr) = skeleton(p, par)?;
    let col = natural_coloring(&s.structure, par.m, Some(par.period))?;
    Ok((s, tr, col))
}

fn quotient_of(s: &Structure, sk: &Skeleton, tr: &ChaseTrace, n: usize) -> anyhow::Result<QuotientMap> {
    let region = Region::from_depths(&sk.structure, sk.depth.clone(), tr.rounds(), type_bound(n));
    Ok(quotient(s, n, &region)?)
}

fn show_probe(t: &Theory, probe: &Probe) -> (String, Value) {
    let mut text = String::new();
    let mut rows = Vec::new();
    for (i, (r, rep)) in t.rules.iter().zip(probe.reports()).enumerate() {
        let verdict = if rep.terminated { "fixpoint" } else { "open" };
        text += &format!(
            "rule {} {verdict} after {} steps, {} disjuncts, kappa {}\t{}\n",
            i + 1,
            rep.depth,
            rep.result.disjuncts.len(),
            rep.kappa,
            r.show(&t.sig)
        );
        rows.push(json!({"rule": i + 1, "terminated": rep.terminated, "steps": rep.depth,
            "disjuncts": rep.result.disjuncts.len(), "kappa": rep.kappa}));
    }
    (text, Value::Array(rows))
}

fn show_graph(g: &QueryGraph) -> String {
    let v = |x: u32| g.query.vars[x as usize].clone();
    match &g.shape {
        Shape::Tree => "tree".into(),
        Shape::Other => "other".into(),
        Shape::DirectedCycle(c) => {
            let names: Vec<String> = c.iter().map(|&x| v(x)).collect();
            format!("directed cycle {}", names.join(" -> "))
        }
        Shape::Heart(h) => format!("heart at {} with predecessors {} and {}", v(h.z), v(h.z1), v(h.z2)),
    }
}

fn transform(kind: Kind, p: &Program) -> anyhow::Result<(TransformReport, Structure, Option<chasebound::UnionQuery>)> {
    let q = p.query.as_ref();
    let rep = match kind {
        Kind::BinarizeHeads => binarize_heads(&p.theory)?,
        Kind::Ternarize => ternarize(&p.theory, q)?,
        Kind::Multihead => multihead_encode(&p.theory)?,
        Kind::Guarded2bin => guarded_to_binary(&p.theory, q)?,
    };
    let data = rep.translate_data(&p.data)?;
    let query = match (&rep.query, q) {
        (Some(u), _) => Some(u.clone()),
        (None, Some(q)) => Some(rep.translate_query(q)?),
        (None, None) => None,
    };
    Ok((rep, data, query))
}

fn run(cli: &Cli) -> anyhow::Result<Done> {
    let o = &cli.opts;
    let par = o.params();
    Ok(match &cli.cmd {
        Cmd::Chase { file } => {
            let p = load(file)?;
            let depth = o.depth.map_or(DEFAULT_DEPTH, |d| d as usize);
            let tr = chase(&p.data, &p.theory, depth, par.elements);
            let dump = TraceDump::new(&tr);
            let code = if tr.stop == Stop::Elements { BUDGET } else { OK };
            Done {
                text: dump.to_text(),
                json: serde_json::to_value(&dump)?,
                code,
            }
        }
        Cmd::Rewrite { file } => {
            let p = load(file)?;
            let q = need_query(&p)?;
            let rep = rewrite_ucq(q, &p.theory, o.steps());
            let text = format!(
                "# {} after {} steps, {} disjuncts, kappa {}\n{}\n",
                if rep.terminated { "fixpoint" } else { "open" },
                rep.depth,
                rep.result.disjuncts.len(),
                rep.kappa,
                rep.result.show(&p.theory.sig)
            );
            let disjuncts: Vec<String> = rep.result.disjuncts.iter().map(|d| d.show(&p.theory.sig)).collect();
            Done {
                text,
                json: json!({"terminated": rep.terminated, "steps": rep.depth, "kappa": rep.kappa, "disjuncts": disjuncts}),
                code: if rep.terminated { OK } else { BUDGET },
            }
        }
        Cmd::BddCheck { file } | Cmd::Kappa { file } => {
            let p = load(file)?;
            let probe = bdd_probe(&p.theory, o.steps());
            let (rows, rows_json) = show_probe(&p.theory, &probe);
            let kappa = probe.reports().iter().map(|r| r.kappa).max().unwrap_or(0);
            let certified = probe.is_certified();
            let code = if certified { OK } else { BUDGET };
            if matches!(cli.cmd, Cmd::Kappa { .. }) {
                let text = if certified {
                    format!("{kappa}\n")
                } else {
                    format!("unknown: some rule body is still open after {} steps\n", o.steps())
                };
                Done {
                    text,
                    json: json!({"certified": certified, "kappa": certified.then_some(kappa)}),
                    code,
                }
            } else {
                let verdict = if certified { "bdd certified" } else { "bdd unknown" };
                Done {
                    text: format!("{rows}{verdict}\n"),
                    json: json!({"certified": certified, "rules": rows_json}),
                    code,
                }
            }
        }
        Cmd::Skeleton { file } => {
            let p = load(file)?;
            let (s, tr) = skeleton(&p, &par)?;
            let text = format!(
                "# skeleton of {} rounds: {} elements, {} atoms\n{}",
                tr.rounds(),
                s.structure.num_elems(),
                s.structure.len(),
                s.structure.to_facts()
            );
            Done::ok(text, json!({"rounds": tr.rounds(), "facts": s.structure.to_facts().lines().collect::<Vec<_>>()}))
        }
        Cmd::Color { file } => {
            let p = load(file)?;
            let (_, _, col) = colored(&p, &par)?;
            let d = ColoringDump::new(&col);
            Done::ok(d.to_text(), serde_json::to_value(&d)?)
        }
        Cmd::Quotient { file, plain } => {
            let p = load(file)?;
            let d = if *plain {
                let (s, tr) = skeleton(&p, &par)?;
                QuotientDump::new(&s.structure, &quotient_of(&s.structure, &s, &tr, par.n)?)
            } else {
                let (s, tr, col) = colored(&p, &par)?;
                QuotientDump::new(col.colored(), &quotient_of(col.colored(), &s, &tr, par.n)?)
            };
            Done::ok(d.to_text(), serde_json::to_value(&d)?)
        }
        Cmd::Conservative { file, fingerprints } => {
            let p = load(file)?;
            let (s, tr, col) = colored(&p, &par)?;
            let q = quotient_of(col.colored(), &s, &tr, par.n)?;
            let mut text = String::new();
            let mut grew = Vec::new();
            if *fingerprints {
                let plain = q.quotient.uncolored();
                let sig = Arc::new(plain.sig().clone());
                let preds: Vec<_> = p.theory.sig.preds().filter(|&x| s.structure.count_pred(x) > 0).collect();
                let cat = build_catalog(&sig, &preds, par.m, o.max_catalog)?;
                let base = s.structure.clone().upgrade(sig.clone())?;
                let plain = plain.upgrade(sig)?;
                for e in base.elems().filter(|e| q.interior[e.ix()]) {
                    let extra = fingerprint(&base, e, &cat).diff(&fingerprint(&plain, q.q(e), &cat));
                    if !extra.is_empty() {
                        grew.push(base.name(e).to_string());
                    }
                }
                text += &format!("# {} catalog patterns, {} interior elements gain one\n", cat.len(), grew.len());
            }
            match check_conservative(col.colored(), &q, par.m) {
                Conservativity::Conservative => {
                    text += &format!("conservative at m={} n={}\n", par.m, par.n);
                    Done::ok(text, json!({"conservative": true, "m": par.m, "n": par.n, "fingerprint_growth": grew}))
                }
                Conservativity::Witness { element, pattern } => {
                    let shown = show_pattern(&pattern);
                    text += &format!(
                        "not conservative at m={} n={}: {} gains {shown}\n",
                        par.m,
                        par.n,
                        col.colored().name(element)
                    );
                    Done {
                        text,
                        json: json!({"conservative": false, "m": par.m, "n": par.n,
                            "element": col.colored().name(element), "pattern": shown, "fingerprint_growth": grew}),
                        code: NEGATIVE,
                    }
                }
            }
        }
        Cmd::Synth { file } => {
            let p = load(file)?;
            let cfg = SynthConfig {
                m: o.m.map(|x| x as usize),
                n: o.n.map(|x| x as usize),
                depth: o.depth.map(|x| x as usize),
                period: o.period,
                element_budget: par.elements,
                step_budget: o.steps(),
            };
            match synthesize(&p.theory, &p.data, p.query.as_ref(), &cfg)? {
                Outcome::Certified(c, _) => {
                    let a = Artifact::Certificate(*c);
                    Done::ok(a.to_text(), serde_json::to_value(&a)?)
                }
                Outcome::Entailed { round, .. } => Done {
                    text: format!("query entailed at chase round {round}\n"),
                    json: json!({"entailed": round}),
                    code: NEGATIVE,
                },
                Outcome::Exhausted(f) => {
                    let a = Artifact::Failure(f);
                    Done {
                        text: a.to_text(),
                        json: serde_json::to_value(&a)?,
                        code: BUDGET,
                    }
                }
            }
        }
        Cmd::Verify { file, model } => {
            let p = load(file)?;
            let text = read(model)?;
            let m = if text.starts_with("chasebound ") {
                Artifact::parse(&text)?
                    .model()?
                    .ok_or_else(|| Error::Input("a failure report has no model".into()))?
            } else {
                parse_program(&text)?.data
            };
            let mut sig: Signature = (*p.theory.sig).clone();
            for c in m.sig().consts() {
                let name = m.sig().const_name(c);
                if sig.constant(name).is_none() {
                    sig.add_const(name);
                }
            }
            for x in m.sig().preds() {
                if sig.pred(m.sig().name(x)).is_none() {
                    sig.add_pred(m.sig().name(x), m.sig().arity(x))?;
                }
            }
            let sig = Arc::new(sig);
            let m = m.rebase(sig.clone())?;
            let d = p.data.clone().upgrade(sig.clone())?;
            let t = Theory {
                sig,
                ..p.theory.clone()
            };
            let v = verify_model(&m, &t, &d, p.query.as_ref());
            let mut text = String::new();
            for c in &v.checks {
                text += &format!("{} {}\t{}\n", if c.passed { "pass" } else { "fail" }, c.name, c.detail);
            }
            text += if v.passed() { "model verified\n" } else { "not a model\n" };
            Done {
                text,
                json: serde_json::to_value(&v)?,
                code: if v.passed() { OK } else { NEGATIVE },
            }
        }
        Cmd::NormalizeQuery { file, steps } => {
            let p = load(file)?;
            let q = need_query(&p)?;
            let sig = &p.theory.sig;
            let mut g = classify(q);
            let mut text = format!("{}: {}\nmeasure {}\n", show_graph(&g), q.show(sig), measure(q));
            let mut trail = vec![json!({"shape": show_graph(&g), "query": q.show(sig), "measure": measure(q)})];
            if let Ok(cands) = normalize_step(&g, None) {
                for (i, c) in cands.iter().enumerate() {
                    text += &format!("candidate {} measure {}: {}\n", i + 1, measure(&c.query), c.query.show(sig));
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
            for k in 0..steps.unwrap_or(0) {
                let Ok(cands) = normalize_step(&g, None) else {
                    break;
                };
                let i = rng.gen_range(0..cands.len());
                g = classify(&cands[i].query);
                let mq = measure(&g.query);
                text += &format!("step {} took candidate {} measure {mq}: {}\n", k + 1, i + 1, g.query.show(sig));
                trail.push(json!({"candidate": i + 1, "shape": show_graph(&g), "query": g.query.show(sig), "measure": mq}));
            }
            Done::ok(text, Value::Array(trail))
        }
        Cmd::Transform { kind, file } => {
            let p = load(file)?;
            let (rep, data, query) = transform(*kind, &p)?;
            let sig = &rep.target.sig;
            let mut text = format!("# {} with stretch {}\n", rep.transform, rep.stretch);
            for (label, n) in &rep.steps {
                text += &format!("# step {label}: {n}\n");
            }
            for (name, o) in &rep.provenance {
                text += &format!("# {name} from {}: {}\n", o.source, o.role);
            }
            text += "theory:\n";
            text += &rep.target.to_text();
            text += "data:\n";
            text += &data.to_facts();
            if let Some(u) = &query {
                if let [one] = u.disjuncts.as_slice() {
                    text += &format!("query:\n{}\n", one.show(sig));
                } else {
                    for d in &u.disjuncts {
                        text += &format!("# disjunct {}\n", d.show(sig));
                    }
                }
            }
            let prov: serde_json::Map<String, Value> = rep
                .provenance
                .iter()
                .map(|(k, o)| (k.clone(), json!({"source": o.source, "role": o.role})))
                .collect();
            Done::ok(
                text,
                json!({"transform": rep.transform, "stretch": rep.stretch, "steps": rep.steps,
                    "provenance": prov, "theory": rep.target.to_text(), "data": data.to_facts(),
                    "query": query.map(|u| u.show(sig))}),
            )
        }
        Cmd::Explain { artifact } => {
            let a = Artifact::parse(&read(artifact)?)?;
            Done::ok(explain(&a), json!({"summary": explain(&a)}))
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { INPUT } else { OK });
        }
    };
    match run(&cli) {
        Ok(d) => {
            if cli.opts.json {
                println!("{}", serde_json::to_string_pretty(&d.json).expect("json value"));
            } else {
                print!("{}", d.text);
            }
            ExitCode::from(d.code)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
