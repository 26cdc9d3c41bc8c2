//! Backward piece rewriting of conjunctive queries, the bounded BDD probe
//! and κ.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::program::{Rule, Theory};
use crate::query::{ConjunctiveQuery, QAtom, Term, UnionQuery, Var};

pub const DEFAULT_STEPS: usize = 16;

/// Cap on the atom subsets tried against one rule head.
const MAX_SUBSET_ATOMS: usize = 12;

#[derive(Clone, Debug)]
pub struct RewriteReport {
    pub query: ConjunctiveQuery,
    pub result: UnionQuery,
    /// Saturation rounds run.
    pub depth: usize,
    pub terminated: bool,
    /// Largest variable count among the disjuncts.
    pub kappa: usize,
}

struct Uf(Vec<usize>);

impl Uf {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut x = x;
        while self.0[x] != r {
            let n = self.0[x];
            self.0[x] = r;
            x = n;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            self.0[a.max(b)] = a.min(b);
        }
    }
}

/// Every one-step rewriting of `q` with `rule`.
pub fn rewrite_step(q: &ConjunctiveQuery, rule: &Rule) -> Vec<ConjunctiveQuery> {
    let q = q.compact();
    let nq = q.vars.len();
    let nr = rule.body.vars.len();
    let nc = q
        .constants()
        .into_iter()
        .chain(rule.body.constants())
        .chain(rule.head.iter().flat_map(|a| a.args.iter()).filter_map(|t| match t {
            Term::Const(c) => Some(*c),
            _ => None,
        }))
        .map(|c| c.0 as usize + 1)
        .max()
        .unwrap_or(0);
    let ex = rule.existentials();
    let datalog = ex.is_empty();
    let qnode = |t: &Term| match *t {
        Term::Var(v) => v as usize,
        Term::Const(c) => nq + nr + c.0 as usize,
    };
    let rnode = |t: &Term| match *t {
        Term::Var(v) => nq + v as usize,
        Term::Const(c) => nq + nr + c.0 as usize,
    };
    let cands: Vec<usize> = (0..q.atoms.len())
        .filter(|&i| rule.head.iter().any(|h| h.pred == q.atoms[i].pred))
        .take(MAX_SUBSET_ATOMS)
        .collect();
    let mut out = Vec::new();
    let subsets: Vec<Vec<usize>> = if datalog {
        cands.iter().map(|&i| vec![i]).collect()
    } else {
        (1u32..1 << cands.len())
            .map(|mask| (0..cands.len()).filter(|b| mask >> b & 1 == 1).map(|b| cands[b]).collect())
            .collect()
    };
    for subset in subsets {
        let choices: Vec<Vec<usize>> = subset
            .iter()
            .map(|&i| (0..rule.head.len()).filter(|&h| rule.head[h].pred == q.atoms[i].pred).collect())
            .collect();
        let mut pick = vec![0usize; subset.len()];
        loop {
            let mut uf = Uf((0..nq + nr + nc).collect());
            for &(v, c) in &q.eqs {
                uf.union(v as usize, qnode(&Term::Const(c)));
            }
            for &(v, c) in &rule.body.eqs {
                uf.union(nq + v as usize, rnode(&Term::Const(c)));
            }
            for (k, &i) in subset.iter().enumerate() {
                let h = &rule.head[choices[k][pick[k]]];
                for (a, b) in q.atoms[i].args.iter().zip(&h.args) {
                    uf.union(qnode(a), rnode(b));
                }
            }
            if let Some(r) = finish(&q, rule, &subset, &ex, &mut uf, nq, nr, nc) {
                out.push(r);
            }
            let mut k = 0;
            while k < pick.len() {
                pick[k] += 1;
                if pick[k] < choices[k].len() {
                    break;
                }
                pick[k] = 0;
                k += 1;
            }
            if k == pick.len() {
                break;
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn finish(
    q: &ConjunctiveQuery,
    rule: &Rule,
    subset: &[usize],
    ex: &[Var],
    uf: &mut Uf,
    nq: usize,
    nr: usize,
    nc: usize,
) -> Option<ConjunctiveQuery> {
    let total = nq + nr + nc;
    let mut konst: Vec<Option<usize>> = vec![None; total];
    for c in 0..nc {
        let r = uf.find(nq + nr + c);
        if konst[r].is_some_and(|k| k != c) {
            return None;
        }
        konst[r] = Some(c);
    }
    let outside: HashSet<Var> = (0..q.atoms.len())
        .filter(|i| !subset.contains(i))
        .flat_map(|i| q.atoms[i].vars())
        .collect();
    for &z in ex {
        let rz = uf.find(nq + z as usize);
        if konst[rz].is_some() {
            return None;
        }
        for v in 0..nr {
            if v as Var != z && uf.find(nq + v) == rz {
                return None;
            }
        }
        for v in 0..nq {
            if uf.find(v) == rz && (outside.contains(&(v as Var)) || q.distinguished == Some(v as Var)) {
                return None;
            }
        }
    }
    let mut out = ConjunctiveQuery::new();
    let mut term_of: Vec<Option<Term>> = vec![None; total];
    let mut term = |node: usize, out: &mut ConjunctiveQuery, uf: &mut Uf| -> Term {
        let r = uf.find(node);
        if let Some(c) = konst[r] {
            return Term::Const(crate::signature::Const(c as u32));
        }
        if let Some(t) = term_of[r] {
            return t;
        }
        let name = match (0..nq).find(|&v| uf.find(v) == r) {
            Some(v) => q.vars[v].clone(),
            None => rule.body.vars[node - nq].clone(),
        };
        let t = Term::Var(out.fresh_var(&name));
        term_of[r] = Some(t);
        t
    };
    // Query variables first so they keep their names.
    for v in 0..nq {
        if uf.find(v) == v {
            term(v, &mut out, uf);
        }
    }
    let qt = |t: &Term| match *t {
        Term::Var(v) => v as usize,
        Term::Const(c) => nq + nr + c.0 as usize,
    };
    let rt = |t: &Term| match *t {
        Term::Var(v) => nq + v as usize,
        Term::Const(c) => nq + nr + c.0 as usize,
    };
    let mut atoms = Vec::new();
    for (i, a) in q.atoms.iter().enumerate() {
        if !subset.contains(&i) {
            let args: Vec<Term> = a.args.iter().map(|t| term(qt(t), &mut out, uf)).collect();
            atoms.push(QAtom::new(a.pred, args));
        }
    }
    for a in &rule.body.atoms {
        let args: Vec<Term> = a.args.iter().map(|t| term(rt(t), &mut out, uf)).collect();
        atoms.push(QAtom::new(a.pred, args));
    }
    out.atoms = atoms;
    if let Some(y) = q.distinguished {
        match term(y as usize, &mut out, uf) {
            Term::Const(c) => {
                let v = out.fresh_var(&q.vars[y as usize]);
                out.eqs.push((v, c));
                out.distinguished = Some(v);
            }
            Term::Var(v) => out.distinguished = Some(v),
        }
    }
    Some(out.compact())
}

/// Saturates `{q}` under one-step rewriting for at most `steps` rounds,
/// deduplicating up to isomorphism.
pub fn rewrite_ucq(q: &ConjunctiveQuery, t: &Theory, steps: usize) -> RewriteReport {
    let start = q.compact();
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    seen.insert(start.iso_key());
    let mut all = vec![start.clone()];
    let mut frontier = vec![start.clone()];
    let mut depth = 0;
    let mut terminated = false;
    while depth < steps {
        let mut next = Vec::new();
        for cq in &frontier {
            for rule in &t.rules {
                for r in rewrite_step(cq, rule) {
                    if seen.insert(r.iso_key()) {
                        next.push(r);
                    }
                }
            }
        }
        depth += 1;
        if next.is_empty() {
            terminated = true;
            break;
        }
        all.extend(next.iter().cloned());
        frontier = next;
    }
    if !terminated && frontier.is_empty() {
        terminated = true;
    }
    let kappa = all.iter().map(|d| d.used_vars().len()).max().unwrap_or(0);
    RewriteReport {
        query: start,
        result: UnionQuery { disjuncts: all },
        depth,
        terminated,
        kappa,
    }
}

#[derive(Clone, Debug)]
pub enum Probe {
    /// Every rule body rewrote to a fixpoint; one report per rule.
    Certified(Vec<RewriteReport>),
    Unknown(Vec<RewriteReport>),
}

impl Probe {
    pub fn reports(&self) -> &[RewriteReport] {
        match self {
            Probe::Certified(r) | Probe::Unknown(r) => r,
        }
    }

    pub fn is_certified(&self) -> bool {
        matches!(self, Probe::Certified(_))
    }
}

/// Rewrites every rule body of `t`.
pub fn bdd_probe(t: &Theory, steps: usize) -> Probe {
    let reports: Vec<RewriteReport> = t.rules.iter().map(|r| rewrite_ucq(&r.body, t, steps)).collect();
    if reports.iter().all(|r| r.terminated) {
        Probe::Certified(reports)
    } else {
        Probe::Unknown(reports)
    }
}

/// The largest variable count over the rewritings of all rule bodies.
pub fn kappa(t: &Theory, steps: usize) -> Result<usize> {
    match bdd_probe(t, steps) {
        Probe::Certified(r) => Ok(r.iter().map(|r| r.kappa).max().unwrap_or(0)),
        Probe::Unknown(_) => Err(Error::Resource(format!(
            "some rule body has no rewriting fixpoint within {steps} steps; raise the budget"
        ))),
    }
}
