//! Compilers from wide or guarded programs into narrower signatures.
//!
//! Every compiler returns a [`TransformReport`]. Besides the target theory it
//! carries a *view* for each source predicate it replaced: a disjunction of
//! target-side queries whose first `arity` variables are the arguments. Views
//! translate queries forward and structures backward; [`differential`] uses
//! them to compare bounded chases of the two programs.

mod guarded;
mod reify;
mod ternary;

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::chase::{chase, Certainty, DEFAULT_ELEMENTS};
use crate::error::{Error, Result};
use crate::program::{Rule, Theory};
use crate::query::{holds, ConjunctiveQuery, QAtom, Term, UnionQuery, Var};
use crate::signature::{Pred, Signature};
use crate::structure::{Elem, Structure};

pub use guarded::{guarded_to_binary, MAX_TARGET_RULES};
pub use reify::multihead_encode;
pub use ternary::ternarize;

/// Where a new predicate came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Origin {
    pub source: String,
    pub role: String,
}

#[derive(Clone, Debug)]
pub struct TransformReport {
    pub transform: &'static str,
    pub source: Theory,
    pub target: Theory,
    /// Every predicate of the target that the source lacks.
    pub provenance: BTreeMap<String, Origin>,
    pub views: BTreeMap<Pred, Vec<View>>,
    /// The translated query, when the transform was given one.
    pub query: Option<UnionQuery>,
    /// Stage label and the size it produced, in order.
    pub steps: Vec<(String, usize)>,
    /// Target chase rounds that cover one source round.
    pub stretch: usize,
    codec: Codec,
}

/// One target-side reading of a source predicate: `args[i]` is the
/// variable holding argument `i`. Positions may share a variable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct View {
    pub query: ConjunctiveQuery,
    pub args: Vec<Var>,
}

impl View {
    fn positional(query: ConjunctiveQuery, arity: usize) -> Self {
        View {
            query,
            args: (0..arity as Var).collect(),
        }
    }
}

#[derive(Clone, Debug)]
enum Codec {
    Identity,
    Lists(ternary::Lists),
    Reify(reify::Ids),
    Guarded(guarded::Hosts),
}

impl TransformReport {
    fn new(transform: &'static str, source: &Theory, target: Theory) -> Self {
        TransformReport {
            transform,
            source: source.clone(),
            target,
            provenance: BTreeMap::new(),
            views: BTreeMap::new(),
            query: None,
            steps: Vec::new(),
            stretch: 1,
            codec: Codec::Identity,
        }
    }

    fn note(&mut self, p: Pred, source: &str, role: impl Into<String>) {
        self.provenance.insert(
            self.target.sig.name(p).to_string(),
            Origin {
                source: source.to_string(),
                role: role.into(),
            },
        );
    }

    pub fn is_identity(&self) -> bool {
        self.target.rules == self.source.rules && self.views.is_empty()
    }

    /// Rewrites a source database into the target signature. Element ids of
    /// `d` are kept; auxiliary elements come after them.
    pub fn translate_data(&self, d: &Structure) -> Result<Structure> {
        let base = d
            .clone()
            .upgrade(self.target.sig.clone())?
            .filter_atoms(|_| false);
        match &self.codec {
            Codec::Identity => d.clone().upgrade(self.target.sig.clone()),
            Codec::Lists(l) => Ok(l.encode(d, base)),
            Codec::Reify(r) => Ok(r.encode(d, base)),
            Codec::Guarded(g) => g.encode(d, base),
        }
    }

    /// Rewrites a source query through the views.
    pub fn translate_query(&self, q: &ConjunctiveQuery) -> Result<UnionQuery> {
        let mut partial = vec![Partial {
            q: ConjunctiveQuery {
                vars: q.vars.clone(),
                ..Default::default()
            },
            sub: BTreeMap::new(),
        }];
        for a in &q.atoms {
            let Some(view) = self.views.get(&a.pred) else {
                for p in &mut partial {
                    let args: Vec<Term> = a.args.iter().map(|&t| p.resolve(t)).collect();
                    p.q.atoms.push(QAtom::new(a.pred, args));
                }
                continue;
            };
            if partial.len() * view.len() > MAX_DISJUNCTS {
                return Err(Error::Resource(format!(
                    "translated query exceeds {MAX_DISJUNCTS} disjuncts"
                )));
            }
            let mut next = Vec::new();
            for p in &partial {
                for v in view {
                    let mut p = p.clone();
                    if p.inline(v, &a.args) {
                        next.push(p);
                    }
                }
            }
            partial = next;
        }
        let mut disjuncts = Vec::new();
        'd: for mut p in partial {
            for &(v, c) in &q.eqs {
                match p.resolve(Term::Var(v)) {
                    Term::Var(w) => p.q.eqs.push((w, c)),
                    Term::Const(c2) if c2 == c => {}
                    Term::Const(_) => continue 'd,
                }
            }
            p.q.distinguished = q.distinguished.and_then(|v| p.resolve(Term::Var(v)).var());
            disjuncts.push(p.q);
        }
        if disjuncts.is_empty() {
            return Err(Error::input("query equates distinct constants after translation"));
        }
        Ok(UnionQuery { disjuncts })
    }

    /// Reads the source predicates back off a target structure.
    pub fn view_structure(&self, s: &Structure) -> Structure {
        let n = self.source.sig.num_preds() as u32;
        let mut out = s.filter_atoms(|a| a.pred.0 < n && !self.views.contains_key(&a.pred));
        for (&p, view) in &self.views {
            for v in view {
                for m in crate::query::eval(s, &v.query, &[]) {
                    let args: Vec<Elem> = v.args.iter().map(|&x| m[x as usize]).collect();
                    out.add(p, &args);
                }
            }
        }
        out
    }
}

const MAX_DISJUNCTS: usize = 4096;

/// A disjunct under construction with the variable merges forced so far.
#[derive(Clone)]
struct Partial {
    q: ConjunctiveQuery,
    sub: BTreeMap<Var, Term>,
}

impl Partial {
    fn resolve(&self, mut t: Term) -> Term {
        while let Term::Var(v) = t {
            match self.sub.get(&v) {
                Some(&n) => t = n,
                None => break,
            }
        }
        t
    }

    fn merge(&mut self, a: Term, b: Term) -> bool {
        let (a, b) = (self.resolve(a), self.resolve(b));
        let (from, to) = match (a, b) {
            _ if a == b => return true,
            (Term::Var(x), t) | (t, Term::Var(x)) => (x, t),
            _ => return false,
        };
        self.sub.insert(from, to);
        for at in &mut self.q.atoms {
            for t in at.args.iter_mut() {
                if *t == Term::Var(from) {
                    *t = to;
                }
            }
        }
        true
    }

    /// Appends the body of `view` with its argument variables bound to
    /// `args` and the rest renamed apart. Positions sharing a view variable
    /// force their terms together; fails if that equates two constants.
    fn inline(&mut self, view: &View, args: &[Term]) -> bool {
        let mut map: Vec<Option<Term>> = vec![None; view.query.vars.len()];
        for (&v, &t) in view.args.iter().zip(args) {
            match map[v as usize] {
                None => map[v as usize] = Some(t),
                Some(prev) => {
                    if !self.merge(prev, t) {
                        return false;
                    }
                }
            }
        }
        for (i, name) in view.query.vars.iter().enumerate() {
            if map[i].is_none() {
                map[i] = Some(Term::Var(self.q.fresh_var(name)));
            }
        }
        for a in &view.query.atoms {
            let args: Vec<Term> = a
                .args
                .iter()
                .map(|t| match *t {
                    Term::Var(v) => self.resolve(map[v as usize].unwrap()),
                    c => c,
                })
                .collect();
            self.q.atoms.push(QAtom::new(a.pred, args));
        }
        true
    }
}

/// A view query with answer variables `A0..` followed by `inner` others.
fn view_query(arity: usize, inner: &[&str]) -> (ConjunctiveQuery, Vec<Var>, Vec<Var>) {
    let mut q = ConjunctiveQuery::new();
    let ans = (0..arity).map(|i| q.var(&format!("A{i}"))).collect();
    let rest = inner.iter().map(|n| q.var(n)).collect();
    (q, ans, rest)
}

fn rule(vars: &[String], body: Vec<QAtom>, head: Vec<QAtom>) -> Rule {
    let mut q = ConjunctiveQuery::new();
    q.vars = vars.to_vec();
    q.atoms = body;
    Rule::new(q, head)
}

fn var(v: Var) -> Term {
    Term::Var(v)
}

/// Marks predicates heading a TGD and no datalog rule.
fn finish(mut sig: Signature, rules: Vec<Rule>, hidden: Option<Pred>) -> Theory {
    let tgd: std::collections::BTreeSet<Pred> = rules
        .iter()
        .filter(|r| r.is_tgd())
        .flat_map(|r| r.head.iter().map(|a| a.pred))
        .collect();
    let dl: std::collections::BTreeSet<Pred> = rules
        .iter()
        .filter(|r| !r.is_tgd())
        .flat_map(|r| r.head.iter().map(|a| a.pred))
        .collect();
    for p in sig.preds().collect::<Vec<_>>() {
        sig.set_tgp(p, tgd.contains(&p) && !dl.contains(&p));
    }
    Theory {
        sig: Arc::new(sig),
        rules,
        hidden,
    }
}

/// Splits each TGD `Ψ(x̄,y) ⇒ ∃z̄ Φ(y,z̄)` into one binary-headed TGD per
/// witness plus a datalog rule recombining them. Rules whose head is already
/// a single binary atom with at most one witness are kept.
pub fn binarize_heads(t: &Theory) -> Result<TransformReport> {
    let mut sig = (*t.sig).clone();
    let mut rules = Vec::new();
    let mut made: Vec<(Pred, String, usize)> = Vec::new();
    let mut split = 0;
    for (i, r) in t.rules.iter().enumerate() {
        let ex = r.existentials();
        let simple = r.head.len() == 1 && r.head[0].args.len() <= 2 && ex.len() <= 1;
        if !r.is_tgd() || simple {
            rules.push(r.clone());
            continue;
        }
        let fr = r.frontier();
        let [y] = fr.as_slice() else {
            let names: Vec<&str> = fr.iter().map(|&v| r.body.vars[v as usize].as_str()).collect();
            return Err(Error::input(format!(
                "binarize-heads does not apply to rule {} `{}`: frontier {{{}}} is not a single variable",
                i + 1,
                r.show(&t.sig),
                names.join(",")
            )));
        };
        let stem: Vec<&str> = r.head.iter().map(|a| t.sig.name(a.pred)).collect();
        let stem = stem.join("_");
        let text = r.show(&t.sig);
        let mut recombine = Vec::new();
        for (k, &z) in ex.iter().enumerate() {
            let p = sig.fresh_pred(&format!("R{}_{stem}", k + 1), 2);
            made.push((p, text.clone(), k + 1));
            let atom = QAtom::new(p, [var(*y), var(z)]);
            rules.push(rule(&r.body.vars, r.body.atoms.clone(), vec![atom.clone()]));
            recombine.push(atom);
        }
        rules.push(rule(&r.body.vars, recombine, r.head.clone()));
        split += 1;
    }
    let target = finish(sig, rules, t.hidden);
    let mut rep = TransformReport::new("binarize-heads", t, target);
    for (p, text, k) in made {
        rep.note(p, &text, format!("witness {k}"));
    }
    rep.steps.push(("split TGDs".into(), split));
    rep.stretch = if split > 0 { 2 } else { 1 };
    Ok(rep)
}

/// Bounded certain answers of a source program and its translation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Differential {
    pub source: Certainty,
    /// Target at `depth · stretch` rounds.
    pub target: Certainty,
    /// Target at `depth` rounds.
    pub target_same_depth: Certainty,
}

impl Differential {
    /// Everything the source entails within the budget, the stretched target
    /// entails too.
    pub fn complete(&self) -> bool {
        !matches!(self.source, Certainty::Entailed(_)) || matches!(self.target, Certainty::Entailed(_))
    }

    /// The target is never ahead of the source, and nothing the source
    /// refutes at a fixpoint shows up in the target.
    pub fn sound(&self) -> bool {
        let fast = !matches!(self.target_same_depth, Certainty::Entailed(_))
            || matches!(self.source, Certainty::Entailed(_));
        let refuted = self.source != Certainty::NotEntailed || !matches!(self.target, Certainty::Entailed(_));
        fast && refuted
    }

    pub fn agree(&self) -> bool {
        self.complete() && self.sound()
    }
}

/// First round in which some disjunct holds, over one chase run.
pub fn certain_union(t: &Theory, d: &Structure, q: &UnionQuery, depth: usize) -> Certainty {
    let tr = chase(d, t, depth, DEFAULT_ELEMENTS);
    for k in 0..=tr.rounds() {
        let s = tr.round(k);
        if q.disjuncts.iter().any(|c| holds(&s, c)) {
            return Certainty::Entailed(k);
        }
    }
    match tr.stop {
        crate::chase::Stop::Fixpoint => Certainty::NotEntailed,
        _ => Certainty::Unknown(tr.rounds()),
    }
}

/// Runs the source on `d`, `q` and the target on their translations.
pub fn differential(r: &TransformReport, d: &Structure, q: &ConjunctiveQuery, depth: usize) -> Result<Differential> {
    let td = r.translate_data(d)?;
    let tq = match &r.query {
        Some(q) => q.clone(),
        None => r.translate_query(q)?,
    };
    let source = certain_union(&r.source, d, &UnionQuery::single(q.clone()), depth);
    Ok(Differential {
        source,
        target: certain_union(&r.target, &td, &tq, depth * r.stretch),
        target_same_depth: certain_union(&r.target, &td, &tq, depth),
    })
}

/// Fresh anonymous element for auxiliary tuples.
fn aux(s: &mut Structure, stem: &str, k: &mut usize) -> Elem {
    loop {
        *k += 1;
        let name = format!("_{stem}{k}");
        if s.elem_by_name(&name).is_none() {
            return s.add_elem(name);
        }
    }
}
