//! Ternarization: a wide atom `P(t1,…,tk)` becomes the list
//! `P_1(t1,t2,w1), P_2(w1,t3,w2), …, P'(w_{k-2},tk)`.

use std::collections::{BTreeMap, HashMap};

use super::{aux, finish, rule, var, view_query, Codec, TransformReport, View};
use crate::error::Result;
use crate::program::Theory;
use crate::query::{ConjunctiveQuery, QAtom, Term};
use crate::signature::Pred;
use crate::structure::{Elem, Structure};

#[derive(Clone, Debug, Default)]
pub(super) struct Lists {
    parts: BTreeMap<Pred, Vec<Pred>>,
}

impl Lists {
    pub(super) fn encode(&self, d: &Structure, mut out: Structure) -> Structure {
        let mut cells: HashMap<(Pred, Vec<Elem>), Elem> = HashMap::new();
        let mut k = 0;
        for a in d.atoms() {
            let Some(parts) = self.parts.get(&a.pred) else {
                out.add(a.pred, &a.args);
                continue;
            };
            let n = a.args.len();
            let mut prev: Option<Elem> = None;
            for (j, &p) in parts.iter().enumerate() {
                if j + 1 == parts.len() {
                    out.add(p, &[prev.unwrap(), a.args[n - 1]]);
                    break;
                }
                let key = (a.pred, a.args[..j + 2].to_vec());
                let cell = match cells.get(&key) {
                    Some(&c) => c,
                    None => {
                        let c = aux(&mut out, "l", &mut k);
                        cells.insert(key, c);
                        c
                    }
                };
                match prev {
                    None => out.add(p, &[a.args[0], a.args[1], cell]),
                    Some(w) => out.add(p, &[w, a.args[j + 1], cell]),
                };
                prev = Some(cell);
            }
        }
        out
    }
}

fn chain(q: &mut ConjunctiveQuery, parts: &[Pred], args: &[Term]) -> Vec<QAtom> {
    let n = args.len();
    let ws: Vec<Term> = (0..n - 2).map(|_| var(q.fresh_var("W"))).collect();
    let mut out = vec![QAtom::new(parts[0], [args[0], args[1], ws[0]])];
    for j in 1..n - 2 {
        out.push(QAtom::new(parts[j], [ws[j - 1], args[j + 1], ws[j]]));
    }
    out.push(QAtom::new(parts[n - 2], [ws[n - 3], args[n - 1]]));
    out
}

/// Splits every predicate of arity above three, in the theory, the data
/// and `q`. Wide body atoms become joins over the list predicates; a rule
/// with wide head atoms becomes a cascade building the lists one cell at a
/// time.
pub fn ternarize(t: &Theory, q: Option<&ConjunctiveQuery>) -> Result<TransformReport> {
    let mut sig = (*t.sig).clone();
    let wide: Vec<Pred> = t.sig.preds().filter(|&p| t.sig.arity(p) > 3).collect();
    let mut lists = Lists::default();
    let mut made = Vec::new();
    for &p in &wide {
        let name = t.sig.name(p).to_string();
        let k = t.sig.arity(p);
        let mut parts: Vec<Pred> = (1..=k - 2)
            .map(|i| sig.fresh_pred(&format!("{name}_{i}"), 3))
            .collect();
        parts.push(sig.fresh_pred(&format!("{name}'"), 2));
        for (i, &c) in parts.iter().enumerate() {
            let role = if i + 1 == parts.len() {
                "list end".to_string()
            } else {
                format!("list cell {}", i + 1)
            };
            made.push((c, name.clone(), role));
        }
        lists.parts.insert(p, parts);
    }
    let expand = |q: &mut ConjunctiveQuery, atoms: &[QAtom]| -> Vec<QAtom> {
        let mut out = Vec::new();
        for a in atoms {
            match lists.parts.get(&a.pred) {
                Some(parts) => out.extend(chain(q, parts, &a.args)),
                None => out.push(a.clone()),
            }
        }
        out
    };
    let mut rules = Vec::new();
    let mut stretch = 1;
    let mut cascaded = 0;
    for r in &t.rules {
        let mut q = r.body.clone();
        let body = expand(&mut q, &r.body.atoms);
        let (wide_head, narrow): (Vec<&QAtom>, Vec<&QAtom>) =
            r.head.iter().partition(|a| lists.parts.contains_key(&a.pred));
        if wide_head.is_empty() {
            rules.push(rule(&q.vars, body, r.head.clone()));
            continue;
        }
        let mut pieces = Vec::new();
        for a in wide_head {
            pieces.extend(chain(&mut q, &lists.parts[&a.pred], &a.args));
        }
        stretch = stretch.max(pieces.len());
        cascaded += 1;
        let mut acc = body;
        let last = pieces.len() - 1;
        for (i, piece) in pieces.into_iter().enumerate() {
            let mut head = vec![piece.clone()];
            if i == last {
                head.extend(narrow.iter().map(|a| (*a).clone()));
            }
            rules.push(rule(&q.vars, acc.clone(), head));
            acc.push(piece);
        }
    }
    let target = finish(sig, rules, t.hidden);
    let mut rep = TransformReport::new("ternarize", t, target);
    for (p, src, role) in made {
        rep.note(p, &src, role);
    }
    for (&p, parts) in &lists.parts {
        let k = t.sig.arity(p);
        let (mut v, ans, _) = view_query(k, &[]);
        let args: Vec<Term> = ans.into_iter().map(var).collect();
        v.atoms = chain(&mut v, parts, &args);
        rep.views.insert(p, vec![View::positional(v, k)]);
    }
    rep.steps.push(("split predicates".into(), wide.len()));
    rep.steps.push(("cascaded rules".into(), cascaded));
    rep.stretch = stretch;
    rep.codec = Codec::Lists(lists);
    if let Some(q) = q {
        rep.query = Some(rep.translate_query(q)?);
    }
    Ok(rep)
}
