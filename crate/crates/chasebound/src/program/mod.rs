//! Theories, the program file format, head normalisation and query hiding.

mod parse;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::query::{ConjunctiveQuery, QAtom, Term, Var};
use crate::signature::{Pred, Signature};
use crate::structure::Structure;

pub use parse::{parse_program, parse_query, parse_ucq};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuleKind {
    Tgd,
    Datalog,
}

/// `body -> exists Z. head`. Head atoms share the body's variable table;
/// head variables absent from the body are the existential ones.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub body: ConjunctiveQuery,
    pub head: Vec<QAtom>,
}

impl Rule {
    pub fn new(body: ConjunctiveQuery, head: Vec<QAtom>) -> Self {
        Rule { body, head }
    }

    fn body_vars(&self) -> BTreeSet<Var> {
        let mut s: BTreeSet<Var> = self.body.atoms.iter().flat_map(|a| a.vars()).collect();
        s.extend(self.body.eqs.iter().map(|&(v, _)| v));
        s
    }

    /// Head variables that do not occur in the body.
    pub fn existentials(&self) -> Vec<Var> {
        let body = self.body_vars();
        let mut out: Vec<Var> = self
            .head
            .iter()
            .flat_map(|a| a.vars())
            .filter(|v| !body.contains(v))
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Head variables that also occur in the body.
    pub fn frontier(&self) -> Vec<Var> {
        let body = self.body_vars();
        let mut out: Vec<Var> = self
            .head
            .iter()
            .flat_map(|a| a.vars())
            .filter(|v| body.contains(v))
            .collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn kind(&self) -> RuleKind {
        if self.existentials().is_empty() {
            RuleKind::Datalog
        } else {
            RuleKind::Tgd
        }
    }

    pub fn is_tgd(&self) -> bool {
        self.kind() == RuleKind::Tgd
    }

    /// For a normal-form TGD `R(y,z)`: the frontier term `y` and witness `z`.
    pub fn normal_shape(&self) -> Option<(Term, Var)> {
        let [h] = self.head.as_slice() else {
            return None;
        };
        let ex = self.existentials();
        match (h.args.as_slice(), ex.as_slice()) {
            ([y, Term::Var(z)], [w]) if z == w && *y != Term::Var(*z) => Some((*y, *z)),
            _ => None,
        }
    }

    pub fn show(&self, sig: &Signature) -> String {
        let t = |t: &Term| match *t {
            Term::Var(v) => self.body.vars[v as usize].clone(),
            Term::Const(c) => sig.const_name(c).to_string(),
        };
        let atom = |a: &QAtom| {
            let args: Vec<String> = a.args.iter().map(t).collect();
            format!("{}({})", sig.name(a.pred), args.join(","))
        };
        let mut body: Vec<String> = self.body.atoms.iter().map(atom).collect();
        for &(v, c) in &self.body.eqs {
            body.push(format!("{} = {}", self.body.vars[v as usize], sig.const_name(c)));
        }
        let head: Vec<String> = self.head.iter().map(atom).collect();
        let ex = self.existentials();
        let exists = if ex.is_empty() {
            String::new()
        } else {
            let names: Vec<&str> = ex.iter().map(|&v| self.body.vars[v as usize].as_str()).collect();
            format!("exists {}. ", names.join(","))
        };
        format!("{} -> {}{}.", body.join(", "), exists, head.join(", "))
    }

    /// Number of distinct variables in the body.
    pub fn body_width(&self) -> usize {
        self.body_vars().len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Theory {
    pub sig: Arc<Signature>,
    pub rules: Vec<Rule>,
    /// The sentinel predicate added by [`hide_query`].
    pub hidden: Option<Pred>,
}

impl Theory {
    pub fn new(sig: Arc<Signature>) -> Self {
        Theory {
            sig,
            rules: Vec::new(),
            hidden: None,
        }
    }

    pub fn tgds(&self) -> impl Iterator<Item = (usize, &Rule)> {
        self.rules.iter().enumerate().filter(|(_, r)| r.is_tgd())
    }

    pub fn datalog(&self) -> impl Iterator<Item = (usize, &Rule)> {
        self.rules.iter().enumerate().filter(|(_, r)| !r.is_tgd())
    }

    pub fn datalog_only(&self) -> Theory {
        Theory {
            sig: self.sig.clone(),
            rules: self.datalog().map(|(_, r)| r.clone()).collect(),
            hidden: self.hidden,
        }
    }

    /// Predicates occurring anywhere in the rules.
    pub fn used_preds(&self) -> BTreeSet<Pred> {
        self.rules
            .iter()
            .flat_map(|r| r.body.atoms.iter().chain(&r.head))
            .map(|a| a.pred)
            .collect()
    }

    pub fn to_text(&self) -> String {
        self.rules
            .iter()
            .map(|r| r.show(&self.sig) + "\n")
            .collect()
    }
}

/// Theory, database and optional query of one program file.
#[derive(Clone, Debug)]
pub struct Program {
    pub theory: Theory,
    pub data: Structure,
    pub query: Option<ConjunctiveQuery>,
}

impl Program {
    pub fn to_text(&self) -> String {
        let mut out = String::from("theory:\n");
        out += &self.theory.to_text();
        out += "data:\n";
        out += &self.data.to_facts();
        if let Some(q) = &self.query {
            out += "query:\n";
            out += &q.show(&self.theory.sig);
            out.push('\n');
        }
        out
    }
}

fn bridge(sig: &Signature, from: Pred, to: Pred, reversed: bool) -> Rule {
    let _ = sig;
    let mut body = ConjunctiveQuery::new();
    let (x, y) = (body.var("X"), body.var("Y"));
    body.atom(from, [Term::Var(x), Term::Var(y)]);
    let args = if reversed { [y, x] } else { [x, y] };
    Rule::new(body, vec![QAtom::new(to, args.map(Term::Var))])
}

/// Puts every TGD head in the shape `∃z R(y,z)` with `R` a predicate that
/// heads no datalog rule, adding the bridging datalog rules, and marks TGPs.
pub fn normalize_heads(t: &Theory) -> Result<Theory> {
    for p in t.used_preds() {
        if t.sig.arity(p) > 2 {
            return Err(Error::input(format!(
                "{}/{} is not binary; route the theory through a transform first",
                t.sig.name(p),
                t.sig.arity(p)
            )));
        }
    }
    let mut sig = (*t.sig).clone();
    let mut rules = t.rules.clone();
    let mut bridges: Vec<Rule> = Vec::new();
    let mut primed: BTreeMap<(Pred, bool), Pred> = BTreeMap::new();
    let mut prime = |sig: &mut Signature, bridges: &mut Vec<Rule>, r: Pred, rev: bool| -> Pred {
        *primed.entry((r, rev)).or_insert_with(|| {
            let suffix = if rev { "__p2" } else { "__p1" };
            let name = format!("{}{}", sig.name(r), suffix);
            let p = match sig.pred(&name) {
                Some(p) if sig.arity(p) == 2 => p,
                _ => sig.fresh_pred(&name, 2),
            };
            bridges.push(bridge(sig, p, r, rev));
            p
        })
    };
    for rule in rules.iter_mut().filter(|r| r.is_tgd()) {
        let ex = rule.existentials();
        let [h] = rule.head.as_slice() else {
            return Err(Error::input("multi-atom head; use the multihead transform"));
        };
        if ex.len() != 1 || h.args.len() != 2 {
            return Err(Error::input(format!(
                "TGD head {} is not of the form R(y,z) or R(z,y)",
                sig.name(h.pred)
            )));
        }
        let z = Term::Var(ex[0]);
        match (h.args[0], h.args[1]) {
            (a, b) if b == z && a != z => {}
            (a, b) if a == z && b != z => {
                let p = prime(&mut sig, &mut bridges, h.pred, true);
                rule.head = vec![QAtom::new(p, [b, a])];
            }
            _ => return Err(Error::input("TGD head repeats its witness")),
        }
    }
    loop {
        let dl: BTreeSet<Pred> = rules
            .iter()
            .chain(&bridges)
            .filter(|r| !r.is_tgd())
            .flat_map(|r| r.head.iter().map(|a| a.pred))
            .collect();
        let mut changed = false;
        for rule in rules.iter_mut().filter(|r| r.is_tgd()) {
            let h = rule.head[0].clone();
            if dl.contains(&h.pred) {
                let p = prime(&mut sig, &mut bridges, h.pred, false);
                rule.head = vec![QAtom::new(p, h.args.iter().copied())];
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    for b in bridges {
        if !rules.contains(&b) {
            rules.push(b);
        }
    }
    let tgd_heads: BTreeSet<Pred> = rules
        .iter()
        .filter(|r| r.is_tgd())
        .map(|r| r.head[0].pred)
        .collect();
    let dl_heads: BTreeSet<Pred> = rules
        .iter()
        .filter(|r| !r.is_tgd())
        .flat_map(|r| r.head.iter().map(|a| a.pred))
        .collect();
    for p in sig.preds().collect::<Vec<_>>() {
        sig.set_tgp(p, tgd_heads.contains(&p) && !dl_heads.contains(&p));
    }
    Ok(Theory {
        sig: Arc::new(sig),
        rules,
        hidden: t.hidden,
    })
}

pub const HIDDEN: &str = "__F";

/// Adds `Q ⇒ ∃z F(y,z)` with `F` fresh and `y` the lexicographically last
/// variable of `Q`.
pub fn hide_query(t: &Theory, q: &ConjunctiveQuery) -> Result<Theory> {
    if t.sig.pred(HIDDEN).is_some() {
        return Err(Error::input(format!("{HIDDEN} already in the signature")));
    }
    let q = q.compact();
    let y = (0..q.vars.len() as Var)
        .max_by(|&a, &b| q.vars[a as usize].cmp(&q.vars[b as usize]))
        .ok_or_else(|| Error::input("ground query; test it directly against the data"))?;
    let mut sig = (*t.sig).clone();
    let f = sig.add_pred(HIDDEN, 2)?;
    let mut body = q.clone();
    body.distinguished = None;
    let z = body.fresh_var("Z");
    let mut rules = t.rules.clone();
    rules.push(Rule::new(body, vec![QAtom::new(f, [Term::Var(y), Term::Var(z)])]));
    Ok(Theory {
        sig: Arc::new(sig),
        rules,
        hidden: Some(f),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub pred: String,
    pub arity: usize,
    pub transform: &'static str,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}: try `{}`", self.pred, self.arity, self.transform)
    }
}

/// Predicates of arity above two, each with the transform that removes it.
pub fn validate_binary(t: &Theory) -> Vec<Diagnostic> {
    let single_frontier_head: BTreeSet<Pred> = t
        .tgds()
        .filter(|(_, r)| r.frontier().len() == 1 && r.head.len() == 1)
        .map(|(_, r)| r.head[0].pred)
        .collect();
    t.used_preds()
        .into_iter()
        .filter(|&p| t.sig.arity(p) > 2)
        .map(|p| {
            let arity = t.sig.arity(p);
            let transform = if single_frontier_head.contains(&p) {
                "binarize-heads"
            } else if arity > 3 {
                "ternarize"
            } else {
                "multihead"
            };
            Diagnostic {
                pred: t.sig.name(p).to_string(),
                arity,
                transform,
            }
        })
        .collect()
}
