//! Multi-head encoding: a `k`-ary atom `P(x1,…,xk)` with `k ≥ 3` becomes an
//! atom id `t` with binary position links `A1_P(t,x1), …, Ak_P(t,xk)`.

use std::collections::BTreeMap;

use super::{aux, finish, rule, var, view_query, Codec, TransformReport, View};
use crate::error::Result;
use crate::program::Theory;
use crate::query::{ConjunctiveQuery, QAtom, Term};
use crate::signature::Pred;
use crate::structure::Structure;

#[derive(Clone, Debug, Default)]
pub(super) struct Ids {
    links: BTreeMap<Pred, Vec<Pred>>,
}

impl Ids {
    pub(super) fn encode(&self, d: &Structure, mut out: Structure) -> Structure {
        let mut k = 0;
        for a in d.atoms() {
            match self.links.get(&a.pred) {
                None => {
                    out.add(a.pred, &a.args);
                }
                Some(links) => {
                    let t = aux(&mut out, "t", &mut k);
                    for (&l, &x) in links.iter().zip(&a.args) {
                        out.add(l, &[t, x]);
                    }
                }
            }
        }
        out
    }

    fn reify(&self, q: &mut ConjunctiveQuery, a: &QAtom) -> Vec<QAtom> {
        let links = &self.links[&a.pred];
        let t = var(q.fresh_var("T"));
        links.iter().zip(&a.args).map(|(&l, &x)| QAtom::new(l, [t, x])).collect()
    }
}

/// Reifies every atom of arity three or more. A rule whose head is one wide
/// atom mints the id together with the positions it already knows, then
/// fills each remaining existential position by its own rule reading only
/// the id's links. Other wide heads become a single multi-head TGD.
pub fn multihead_encode(t: &Theory) -> Result<TransformReport> {
    let mut sig = (*t.sig).clone();
    let mut ids = Ids::default();
    let mut made = Vec::new();
    for p in t.sig.preds().filter(|&p| t.sig.arity(p) >= 3).collect::<Vec<_>>() {
        let name = t.sig.name(p).to_string();
        let links: Vec<Pred> = (1..=t.sig.arity(p))
            .map(|i| {
                let l = sig.fresh_pred(&format!("A{i}_{name}"), 2);
                made.push((l, name.clone(), format!("argument {i}")));
                l
            })
            .collect();
        ids.links.insert(p, links);
    }
    let mut rules = Vec::new();
    let mut stretch = 1;
    let mut chained = 0;
    for r in &t.rules {
        let mut q = r.body.clone();
        let mut body = Vec::new();
        for a in &r.body.atoms {
            if ids.links.contains_key(&a.pred) {
                body.extend(ids.reify(&mut q, a));
            } else {
                body.push(a.clone());
            }
        }
        let wide: Vec<&QAtom> = r.head.iter().filter(|a| ids.links.contains_key(&a.pred)).collect();
        if wide.is_empty() {
            rules.push(rule(&q.vars, body, r.head.clone()));
            continue;
        }
        if r.head.len() > 1 {
            let mut head = Vec::new();
            for a in &r.head {
                if ids.links.contains_key(&a.pred) {
                    head.extend(ids.reify(&mut q, a));
                } else {
                    head.push(a.clone());
                }
            }
            rules.push(rule(&q.vars, body, head));
            continue;
        }
        let a = &r.head[0];
        let ex = r.existentials();
        let is_ex = |t: &Term| matches!(t, Term::Var(v) if ex.contains(v));
        let links = &ids.links[&a.pred];
        let id = var(q.fresh_var("T"));
        let known: Vec<QAtom> = (0..a.args.len())
            .filter(|&i| !is_ex(&a.args[i]))
            .map(|i| QAtom::new(links[i], [id, a.args[i]]))
            .collect();
        // Existential groups in order of first position.
        let mut groups: Vec<Term> = Vec::new();
        for t in a.args.iter().filter(|t| is_ex(t)) {
            if !groups.contains(t) {
                groups.push(*t);
            }
        }
        let group_atoms = |z: Term| -> Vec<QAtom> {
            (0..a.args.len())
                .filter(|&i| a.args[i] == z)
                .map(|i| QAtom::new(links[i], [id, z]))
                .collect()
        };
        let mut filled = known.clone();
        let mut first = known;
        let mut rest = groups.as_slice();
        if first.is_empty() {
            first = group_atoms(groups[0]);
            rest = &groups[1..];
        }
        filled.extend(first.iter().filter(|x| !filled.contains(x)).cloned().collect::<Vec<_>>());
        rules.push(rule(&q.vars, body, first));
        for &z in rest {
            let head = group_atoms(z);
            rules.push(rule(&q.vars, filled.clone(), head.clone()));
            filled.extend(head);
        }
        stretch = stretch.max(1 + rest.len());
        if !rest.is_empty() {
            chained += 1;
        }
    }
    let target = finish(sig, rules, t.hidden);
    let mut rep = TransformReport::new("multihead", t, target);
    for (p, src, role) in made {
        rep.note(p, &src, role);
    }
    for (&p, links) in &ids.links {
        let k = t.sig.arity(p);
        let (mut v, ans, inner) = view_query(k, &["T"]);
        v.atoms = links.iter().zip(&ans).map(|(&l, &x)| QAtom::new(l, [var(inner[0]), var(x)])).collect();
        rep.views.insert(p, vec![View::positional(v, k)]);
    }
    rep.steps.push(("reified predicates".into(), ids.links.len()));
    rep.steps.push(("chained heads".into(), chained));
    rep.stretch = stretch;
    rep.codec = Codec::Reify(ids);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chase::Certainty;
    use crate::program::{parse_program, parse_query, validate_binary};
    use crate::transforms::{differential, ternarize};

    #[test]
    fn displayed_rule_becomes_two() {
        let p = parse_program("theory:\nP1(X,Y,Z), P2(X,Y,Z2) -> exists W. P(X,Z,W).\n").unwrap();
        let r = multihead_encode(&p.theory).unwrap();
        assert_eq!(
            r.target.to_text(),
            "A1_P1(T,X), A2_P1(T,Y), A3_P1(T,Z), A1_P2(T6,X), A2_P2(T6,Y), A3_P2(T6,Z2) \
             -> exists T7. A1_P(T7,X), A2_P(T7,Z).\n\
             A1_P(T7,X), A2_P(T7,Z) -> exists W. A3_P(T7,W).\n"
        );
        assert!(validate_binary(&r.target).is_empty());
        assert_eq!(r.provenance["A3_P"].role, "argument 3");
        assert_eq!(r.stretch, 2);
    }

    #[test]
    fn narrow_rules_untouched() {
        let p = parse_program("theory:\nE(X,Y) -> exists Z. E(Y,Z).\nE(X,Y) -> U(X).\n").unwrap();
        assert!(multihead_encode(&p.theory).unwrap().is_identity());
    }

    #[test]
    fn reified_chase_agrees() {
        let p = parse_program(
            "theory:\nP1(X,Y,Z), P2(X,Y,Z2) -> exists W. P(X,Z,W).\nP(X,Y,Z) -> exists V. P1(Y,Z,V).\n\
             P(X,Y,Z) -> P2(Y,Z,X).\ndata:\nP1(a,b,c).\nP2(a,b,d).\n",
        )
        .unwrap();
        let r = multihead_encode(&p.theory).unwrap();
        let d2 = r.translate_data(&p.data).unwrap();
        assert_eq!(r.view_structure(&d2).to_facts(), p.data.to_facts());
        let q = parse_query(&p.theory.sig, "exists X,Y,Z,U,V. P(X,Y,Z), P(Y,U,V).").unwrap();
        let d = differential(&r, &p.data, &q, 4).unwrap();
        assert!(matches!(d.source, Certainty::Entailed(_)) && d.agree(), "{d:?}");
    }

    #[test]
    fn after_ternarize_everything_is_binary() {
        let p = parse_program("theory:\nE(X,Y), E(T,Y) -> exists Z. R(X,T,Y,Z).\nR(X,W,Y,Z) -> E(Y,Z).\n").unwrap();
        let t = ternarize(&p.theory, None).unwrap();
        let m = multihead_encode(&t.target).unwrap();
        assert!(validate_binary(&m.target).is_empty());
    }
}
