//! Finite-model synthesis: chase a prefix, keep its skeleton, color it,
//! quotient it, close it under datalog and check the result directly.
//!
//! Everything before the final check is heuristic. A [`Certificate`] is only
//! issued after [`verify_model`] has confirmed the model from scratch.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chase::{chase, datalog_saturate, Stop};
use crate::coloring::natural_coloring;
use crate::error::{Error, Result};
use crate::program::{hide_query, normalize_heads, parse_program, Rule, Theory};
use crate::query::{initial, search, ConjunctiveQuery};
use crate::rewrite::{bdd_probe, Probe};
use crate::signature::{Pred, Signature};
use crate::structure::{Elem, Structure};
use crate::types::{check_conservative, quotient, show_pattern, type_bound, Conservativity, Region};

pub const ARTIFACT_VERSION: u32 = 1;

/// Gives every non-constant element of `d` a constant of its own.
///
/// Returns the extended signature, `d` over it, and the `(element, constant)`
/// names introduced. A name already taken gets a numeric suffix.
pub fn name_elements(d: &Structure) -> (Arc<Signature>, Structure, Vec<(String, String)>) {
    let mut sig = d.sig().clone();
    let mut fresh = Vec::new();
    for e in d.elems().filter(|&e| !d.is_const(e)) {
        let old = d.name(e).to_string();
        let stem = old.trim_start_matches('_');
        let stem = match stem.chars().next() {
            Some(ch) if ch.is_ascii_lowercase() => stem.to_string(),
            _ => format!("d{stem}"),
        };
        let mut name = stem.clone();
        let mut k = 1;
        while sig.constant(&name).is_some() {
            k += 1;
            name = format!("{stem}_{k}");
        }
        let c = sig.add_const(&name);
        fresh.push((e, c, old, name));
    }
    let sig = Arc::new(sig);
    let mut out = d.clone().upgrade(sig.clone()).expect("extension");
    let mut renames = Vec::new();
    for (e, c, old, name) in fresh {
        out.bind_const(c, e).expect("fresh constant on a plain element");
        renames.push((old, name));
    }
    (sig, out, renames)
}

/// Database atoms plus TGP atoms of a chase prefix, with each element's
/// creation round.
#[derive(Clone, Debug)]
pub struct Skeleton {
    pub structure: Structure,
    pub depth: Vec<usize>,
}

/// Keeps the atoms of `d` and the atoms of TGPs, and checks that the
/// non-constant part is a forest of bounded degree.
pub fn extract_skeleton(trace: &crate::chase::ChaseTrace, d: &Structure, t: &Theory) -> Result<Skeleton> {
    let c = &trace.result;
    let sig = c.sig();
    let from_d: BTreeSet<&crate::Atom> = d.atoms().collect();
    let s = c.filter_atoms(|a| from_d.contains(a) || t.sig.is_tgp(a.pred));
    let depth: Vec<usize> = s.elems().map(|e| trace.depth(e)).collect();
    let mut indeg = vec![0usize; s.num_elems()];
    let mut degree = vec![0usize; s.num_elems()];
    for a in s.atoms().filter(|a| a.args.len() == 2) {
        let (x, y) = (a.args[0], a.args[1]);
        if s.is_const(x) || s.is_const(y) {
            continue;
        }
        indeg[y.ix()] += 1;
        degree[x.ix()] += 1;
        degree[y.ix()] += 1;
    }
    let bound = sig.base_preds().len() + 1;
    for e in s.elems() {
        if indeg[e.ix()] > 1 {
            return Err(Error::Internal(format!("skeleton element {} has two parents", s.name(e))));
        }
        if degree[e.ix()] > bound {
            return Err(Error::Internal(format!(
                "skeleton element {} has degree {} above {bound}",
                s.name(e),
                degree[e.ix()]
            )));
        }
    }
    if let Err(v) = crate::coloring::vtdag_check(&s) {
        return Err(Error::Internal(format!("skeleton is not a forest: {v}")));
    }
    Ok(Skeleton { structure: s, depth })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Check {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Direct checks of a candidate model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verification {
    pub checks: Vec<Check>,
}

impl Verification {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.passed)
    }
}

/// A body match of `rule` in `m` with no head witness, as variable values.
pub fn rule_violation(m: &Structure, rule: &Rule) -> Option<Vec<Elem>> {
    let mut b = initial(m, &rule.body, &[])?;
    let mut bad = None;
    search(m, &rule.body.atoms, &mut b, &mut |asg| {
        let mut hb = asg.to_vec();
        let mut ok = false;
        search(m, &rule.head, &mut hb, &mut |_| {
            ok = true;
            false
        });
        if !ok {
            bad = Some(asg.iter().map(|e| e.unwrap_or(Elem(u32::MAX))).collect());
        }
        ok
    });
    bad
}

fn show_match(m: &Structure, rule: &Rule, vals: &[Elem]) -> String {
    let parts: Vec<String> = rule
        .body
        .vars
        .iter()
        .zip(vals)
        .filter(|(_, e)| e.0 != u32::MAX)
        .map(|(v, &e)| format!("{v}={}", m.name(e)))
        .collect();
    parts.join(" ")
}

/// Checks `m ⊨ d`, every rule of `t`, and `m ⊭ q`. A `__F` atom in `m`, if
/// the predicate exists, is reported too.
pub fn verify_model(m: &Structure, t: &Theory, d: &Structure, q: Option<&ConjunctiveQuery>) -> Verification {
    let mut checks = vec![Check::new(
        "data",
        crate::hom_into(d, m),
        "database maps into the model",
    )];
    for (i, rule) in t.rules.iter().enumerate() {
        let v = rule_violation(m, rule);
        let detail = match &v {
            None => rule.show(&t.sig),
            Some(vals) => format!("{} fails at {}", rule.show(&t.sig), show_match(m, rule, vals)),
        };
        checks.push(Check::new(format!("rule {i}"), v.is_none(), detail));
    }
    if let Some(q) = q {
        let holds = crate::holds(m, q);
        checks.push(Check::new("query", !holds, q.show(&t.sig)));
    }
    if let Some(f) = m.sig().pred(crate::program::HIDDEN) {
        let n = m.count_pred(f);
        checks.push(Check::new("sentinel", n == 0, format!("{n} sentinel atoms")));
    }
    Verification { checks }
}

/// One point of the retry schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Params {
    /// Type size that must be preserved.
    pub m: usize,
    /// Quotient bound.
    pub n: usize,
    /// Chase depth.
    pub depth: usize,
    /// Hue count handed to the coloring.
    pub period: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthConfig {
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub depth: Option<usize>,
    pub period: Option<u32>,
    pub element_budget: usize,
    pub step_budget: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            m: None,
            n: None,
            depth: None,
            period: None,
            element_budget: crate::chase::DEFAULT_ELEMENTS,
            step_budget: crate::rewrite::DEFAULT_STEPS,
        }
    }
}

/// `m ∈ {κ, κ+1}`, `n ∈ {m+2, 2m+2}`, depth `∈ {2(n+m), 4(n+m)}`, period
/// `∈ {m+1, 2m+2}`, with fixed coordinates taken from `cfg`, in
/// lexicographic order of `(m, n, depth, period)`.
pub fn schedule(kappa: usize, cfg: &SynthConfig) -> Vec<Params> {
    let kappa = kappa.max(1);
    let ms = cfg.m.map_or(vec![kappa, kappa + 1], |m| vec![m]);
    let mut out = Vec::new();
    for &m in &ms {
        let ns = cfg.n.map_or(vec![m + 2, 2 * m + 2], |n| vec![n]);
        for &n in &ns {
            let depths = cfg.depth.map_or(vec![2 * (n + m), 4 * (n + m)], |d| vec![d]);
            let periods = cfg.period.map_or(vec![m as u32 + 1, 2 * m as u32 + 2], |p| vec![p]);
            for &depth in &depths {
                for &period in &periods {
                    out.push(Params { m, n, depth, period });
                }
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Pipeline stages, in order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    Chase,
    Skeleton,
    Coloring,
    Quotient,
    Conservative,
    Saturate,
    Verify,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Chase,
        Stage::Skeleton,
        Stage::Coloring,
        Stage::Quotient,
        Stage::Conservative,
        Stage::Saturate,
        Stage::Verify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Chase => "chase",
            Stage::Skeleton => "skeleton",
            Stage::Coloring => "coloring",
            Stage::Quotient => "quotient",
            Stage::Conservative => "conservative",
            Stage::Saturate => "saturate",
            Stage::Verify => "verify",
        }
    }

    fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s)
    }

    /// What the stage produces.
    pub fn describe(self) -> &'static str {
        match self {
            Stage::Chase => "chase prefix",
            Stage::Skeleton => "skeleton (database and TGP atoms)",
            Stage::Coloring => "naturally colored skeleton",
            Stage::Quotient => "quotient of the colored skeleton",
            Stage::Conservative => "type preservation check",
            Stage::Saturate => "datalog closure of the quotient",
            Stage::Verify => "direct model check",
        }
    }
}

/// A failed try at one point of the schedule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub params: Params,
    /// The stage that failed.
    pub stage: Stage,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub version: u32,
    pub kappa: usize,
    pub bdd_certified: bool,
    /// `None` when the chase itself reached a fixpoint.
    pub params: Option<Params>,
    pub fixpoint_round: Option<usize>,
    /// Element count of each structure built on the way.
    pub sizes: Vec<(Stage, usize)>,
    pub verification: Verification,
    /// Model facts in program syntax.
    pub model: String,
    pub model_size: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureReport {
    pub version: u32,
    pub kappa: usize,
    pub bdd_certified: bool,
    pub attempts: Vec<Attempt>,
}

impl FailureReport {
    pub fn last(&self) -> Option<&Attempt> {
        self.attempts.last()
    }
}

#[derive(Clone, Debug)]
pub enum Outcome {
    Certified(Box<Certificate>, Structure),
    /// The query showed up in the chase prefix at this round.
    Entailed { round: usize, params: Option<Params> },
    Exhausted(FailureReport),
}

/// Result of one attempt.
enum Try {
    Model(Box<Certificate>, Structure),
    Entailed(usize),
    Failed(Stage, String),
}

struct Prepared {
    t0: Theory,
    t: Theory,
    d: Structure,
    q: Option<ConjunctiveQuery>,
    base: Vec<Pred>,
}

fn prepare(t0: &Theory, d: &Structure, q: Option<&ConjunctiveQuery>) -> Result<Prepared> {
    if !crate::program::validate_binary(t0).is_empty() {
        return Err(Error::input("theory is not binary; use a transform first"));
    }
    let (sig, d, _) = name_elements(d);
    if !sig.extends(&t0.sig) {
        return Err(Error::input("data and theory signatures differ"));
    }
    let t0 = Theory {
        sig: sig.clone(),
        ..t0.clone()
    };
    let hidden = match q {
        Some(q) => hide_query(&t0, q)?,
        None => t0.clone(),
    };
    let t = normalize_heads(&hidden)?;
    let d = d.upgrade(t.sig.clone())?;
    Ok(Prepared {
        base: t0.sig.preds().collect(),
        t0,
        t,
        d,
        q: q.cloned(),
    })
}

/// κ of the prepared theory, or the widest rule body when the probe gives up.
fn kappa_of(t: &Theory, steps: usize) -> (usize, bool) {
    match bdd_probe(t, steps) {
        Probe::Certified(r) => (r.iter().map(|x| x.kappa).max().unwrap_or(1), true),
        Probe::Unknown(_) => (t.rules.iter().map(|r| r.body_width()).max().unwrap_or(1), false),
    }
}

fn attempt(p: &Prepared, params: Params, cfg: &SynthConfig, kappa: usize, bdd: bool) -> Try {
    let trace = chase(&p.d, &p.t, params.depth, cfg.element_budget);
    if let Some(f) = p.t.hidden {
        if trace.result.count_pred(f) > 0 {
            // The sentinel fires one round after the query first matches.
            let round = (0..=trace.rounds())
                .find(|&i| trace.added[..=i].iter().flatten().any(|a| a.pred == f))
                .unwrap_or(1);
            return Try::Entailed(round.saturating_sub(1));
        }
    }
    let mut sizes = vec![(Stage::Chase, trace.result.num_elems())];
    let finish = |candidate: Structure, params: Option<Params>, fix: Option<usize>, sizes: Vec<(Stage, usize)>| {
        let v0 = verify_model(&candidate, &p.t0, &p.d, p.q.as_ref());
        let model = candidate.restrict_preds(&p.base).expect("own predicates");
        let mut v = verify_model(&model, &p.t0, &p.d, p.q.as_ref());
        v.checks.retain(|c| c.name != "sentinel");
        v.checks.extend(v0.checks.into_iter().filter(|c| c.name == "sentinel"));
        if !v.passed() {
            let f = v.first_failure().unwrap();
            return Try::Failed(Stage::Verify, format!("{}: {}", f.name, f.detail));
        }
        let cert = Certificate {
            version: ARTIFACT_VERSION,
            kappa,
            bdd_certified: bdd,
            params,
            fixpoint_round: fix,
            sizes,
            verification: v,
            model: model.to_facts(),
            model_size: model.num_elems(),
        };
        Try::Model(Box::new(cert), model)
    };
    match trace.stop {
        Stop::Fixpoint => return finish(trace.result.clone(), None, Some(trace.rounds()), sizes),
        Stop::Elements => {
            return Try::Failed(
                Stage::Chase,
                format!("element budget {} reached", cfg.element_budget),
            )
        }
        Stop::Depth => {}
    }
    let skel = match extract_skeleton(&trace, &p.d, &p.t) {
        Ok(s) => s,
        Err(e) => return Try::Failed(Stage::Skeleton, e.to_string()),
    };
    sizes.push((Stage::Skeleton, skel.structure.num_elems()));
    let col = match natural_coloring(&skel.structure, params.m, Some(params.period)) {
        Ok(c) => c,
        Err(e) => return Try::Failed(Stage::Coloring, e.to_string()),
    };
    sizes.push((Stage::Coloring, col.num_hues()));
    let region = Region::from_depths(&skel.structure, skel.depth.clone(), trace.rounds(), type_bound(params.n));
    let q = match quotient(col.colored(), params.n, &region) {
        Ok(q) => q,
        Err(e) => return Try::Failed(Stage::Quotient, e.to_string()),
    };
    sizes.push((Stage::Quotient, q.num_classes()));
    if let Conservativity::Witness { element, pattern } = check_conservative(col.colored(), &q, params.m) {
        return Try::Failed(
            Stage::Conservative,
            format!(
                "{} gains {}",
                col.colored().name(element),
                show_pattern(&pattern)
            ),
        );
    }
    let plain = q.quotient.uncolored();
    let (closed, demand) = datalog_saturate(&plain, &p.t);
    if !demand.is_empty() {
        let r = &p.t.rules[demand[0].rule];
        return Try::Failed(
            Stage::Saturate,
            format!("{} unmet TGD triggers, first for {}", demand.len(), r.show(&p.t.sig)),
        );
    }
    sizes.push((Stage::Saturate, closed.num_elems()));
    finish(closed, Some(params), None, sizes)
}

/// Runs the pipeline over the retry schedule until a model is certified,
/// the query is found entailed, or the schedule runs out.
pub fn synthesize(
    t0: &Theory,
    d: &Structure,
    q: Option<&ConjunctiveQuery>,
    cfg: &SynthConfig,
) -> Result<Outcome> {
    let p = prepare(t0, d, q)?;
    if let Some(q) = &p.q {
        if q.used_vars().is_empty() && crate::holds(&p.d, q) {
            return Ok(Outcome::Entailed { round: 0, params: None });
        }
    }
    let (kappa, bdd) = kappa_of(&p.t, cfg.step_budget);
    let mut attempts = Vec::new();
    for params in schedule(kappa, cfg) {
        match attempt(&p, params, cfg, kappa, bdd) {
            Try::Model(c, m) => return Ok(Outcome::Certified(c, m)),
            Try::Entailed(round) => {
                return Ok(Outcome::Entailed {
                    round,
                    params: Some(params),
                })
            }
            Try::Failed(stage, reason) => attempts.push(Attempt { params, stage, reason }),
        }
    }
    Ok(Outcome::Exhausted(FailureReport {
        version: ARTIFACT_VERSION,
        kappa,
        bdd_certified: bdd,
        attempts,
    }))
}

/// A certificate or a failure report.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Artifact {
    Certificate(Certificate),
    Failure(FailureReport),
}

fn show_params(p: &Params) -> String {
    format!("m={} n={} depth={} period={}", p.m, p.n, p.depth, p.period)
}

fn parse_params(words: &[&str]) -> Option<Params> {
    let mut p = Params {
        m: 0,
        n: 0,
        depth: 0,
        period: 0,
    };
    for w in words {
        let (k, v) = w.split_once('=')?;
        match k {
            "m" => p.m = v.parse().ok()?,
            "n" => p.n = v.parse().ok()?,
            "depth" => p.depth = v.parse().ok()?,
            "period" => p.period = v.parse().ok()?,
            _ => return None,
        }
    }
    Some(p)
}

impl Artifact {
    /// Line-oriented form: a header record, one line per item, and for a
    /// certificate the model facts after a `model` line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        match self {
            Artifact::Certificate(c) => {
                let _ = writeln!(s, "chasebound certificate {}", c.version);
                let _ = writeln!(s, "kappa {} {}", c.kappa, if c.bdd_certified { "certified" } else { "assumed" });
                if let Some(p) = &c.params {
                    let _ = writeln!(s, "params {}", show_params(p));
                }
                if let Some(r) = c.fixpoint_round {
                    let _ = writeln!(s, "fixpoint {r}");
                }
                for (st, n) in &c.sizes {
                    let _ = writeln!(s, "size {} {n}", st.name());
                }
                for ch in &c.verification.checks {
                    let verdict = if ch.passed { "pass" } else { "fail" };
                    let _ = writeln!(s, "check {verdict} {}\t{}", ch.name, ch.detail);
                }
                let _ = writeln!(s, "model {}", c.model_size);
                s.push_str(&c.model);
            }
            Artifact::Failure(f) => {
                let _ = writeln!(s, "chasebound failure {}", f.version);
                let _ = writeln!(s, "kappa {} {}", f.kappa, if f.bdd_certified { "certified" } else { "assumed" });
                for a in &f.attempts {
                    let _ = writeln!(s, "attempt {} {}\t{}", show_params(&a.params), a.stage.name(), a.reason);
                }
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Artifact> {
        let bad = |i: usize, msg: &str| Error::Syntax {
            line: i + 1,
            col: 1,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| bad(0, "empty artifact"))?;
        let head: Vec<&str> = header.split_whitespace().collect();
        let (kind, version) = match head.as_slice() {
            ["chasebound", kind, v] => (*kind, v.parse::<u32>().map_err(|_| bad(0, "bad version"))?),
            _ => return Err(bad(0, "not a chasebound artifact")),
        };
        if version != ARTIFACT_VERSION {
            return Err(Error::input(format!(
                "artifact version {version}, this build reads {ARTIFACT_VERSION}"
            )));
        }
        let mut kappa = 0;
        let mut bdd = false;
        let mut params = None;
        let mut fix = None;
        let mut sizes = Vec::new();
        let mut checks = Vec::new();
        let mut attempts = Vec::new();
        let mut model = None;
        while let Some((i, line)) = lines.next() {
            let (main, detail) = line.split_once('\t').unwrap_or((line, ""));
            let w: Vec<&str> = main.split_whitespace().collect();
            match w.as_slice() {
                ["kappa", k, how] => {
                    kappa = k.parse().map_err(|_| bad(i, "bad kappa"))?;
                    bdd = *how == "certified";
                }
                ["params", rest @ ..] => params = Some(parse_params(rest).ok_or_else(|| bad(i, "bad params"))?),
                ["fixpoint", r] => fix = Some(r.parse().map_err(|_| bad(i, "bad round"))?),
                ["size", st, n] => sizes.push((
                    Stage::parse(st).ok_or_else(|| bad(i, "unknown stage"))?,
                    n.parse().map_err(|_| bad(i, "bad size"))?,
                )),
                ["check", verdict, name @ ..] => checks.push(Check::new(name.join(" "), *verdict == "pass", detail)),
                ["attempt", rest @ ..] if rest.len() == 5 => attempts.push(Attempt {
                    params: parse_params(&rest[..4]).ok_or_else(|| bad(i, "bad params"))?,
                    stage: Stage::parse(rest[4]).ok_or_else(|| bad(i, "unknown stage"))?,
                    reason: detail.to_string(),
                }),
                ["model", n] => {
                    let n: usize = n.parse().map_err(|_| bad(i, "bad model size"))?;
                    let facts: String = lines.by_ref().map(|(_, l)| format!("{l}\n")).collect();
                    model = Some((n, facts));
                }
                [] => {}
                _ => return Err(bad(i, "unrecognized line")),
            }
        }
        match kind {
            "certificate" => {
                let (model_size, model) = model.ok_or_else(|| bad(0, "certificate without model"))?;
                Ok(Artifact::Certificate(Certificate {
                    version,
                    kappa,
                    bdd_certified: bdd,
                    params,
                    fixpoint_round: fix,
                    sizes,
                    verification: Verification { checks },
                    model,
                    model_size,
                }))
            }
            "failure" => Ok(Artifact::Failure(FailureReport {
                version,
                kappa,
                bdd_certified: bdd,
                attempts,
            })),
            _ => Err(bad(0, "unknown artifact kind")),
        }
    }

    /// The model of a certificate, parsed back into a structure.
    pub fn model(&self) -> Result<Option<Structure>> {
        match self {
            Artifact::Certificate(c) => Ok(Some(parse_program(&format!("data:\n{}", c.model))?.data)),
            Artifact::Failure(_) => Ok(None),
        }
    }
}

/// Human-readable summary of an artifact.
pub fn explain(a: &Artifact) -> String {
    let mut s = String::new();
    match a {
        Artifact::Certificate(c) => {
            let _ = writeln!(s, "certified finite model with {} elements", c.model_size);
            let how = if c.bdd_certified { "from a terminating rewriting" } else { "assumed, rewriting did not terminate" };
            let _ = writeln!(s, "kappa = {} ({how})", c.kappa);
            if let Some(r) = c.fixpoint_round {
                let _ = writeln!(s, "chase reached a fixpoint at round {r}; the chase itself is the model");
            }
            if let Some(p) = &c.params {
                let _ = writeln!(s, "parameters: {}", show_params(p));
            }
            for (st, n) in &c.sizes {
                let unit = if *st == Stage::Coloring { "hues" } else { "elements" };
                let _ = writeln!(s, "  {}: {n} {unit}", st.describe());
            }
            if c.sizes.iter().any(|(st, _)| *st == Stage::Saturate) {
                let _ = writeln!(s, "datalog closure of the quotient created no elements and left no TGD demand");
            }
            for ch in &c.verification.checks {
                let verdict = if ch.passed { "passed" } else { "FAILED" };
                let _ = writeln!(s, "check {}: {verdict}", ch.name);
            }
        }
        Artifact::Failure(f) => {
            let _ = writeln!(s, "no model certified after {} attempts", f.attempts.len());
            let how = if f.bdd_certified { "from a terminating rewriting" } else { "assumed, rewriting did not terminate" };
            let _ = writeln!(s, "kappa = {} ({how})", f.kappa);
            if let Some(a) = f.last() {
                let _ = writeln!(s, "last parameters: {}", show_params(&a.params));
                let reached: Vec<&str> = Stage::ALL.iter().take_while(|&&st| st < a.stage).map(|st| st.describe()).collect();
                if !reached.is_empty() {
                    let _ = writeln!(s, "built: {}", reached.join(", "));
                }
                let _ = writeln!(s, "failed at {}: {}", a.stage.describe(), a.reason);
            }
            let _ = writeln!(s, "the schedule is a guess; larger budgets may still succeed");
        }
    }
    s
}
