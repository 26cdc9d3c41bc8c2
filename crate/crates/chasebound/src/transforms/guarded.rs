//! Guarded programs compiled into binary ones.
//!
//! Every element of the guarded chase is born in one TGP atom
//! `R(x1,…,xk,z)`; the `xi` are its parents. In the target `z` knows them
//! through parent links `Fi(xi,z)` and its birth through a unary marker.
//! Any other atom lies within `{c} ∪ parents(c)` for some element `c`, its
//! host, and is stored there as a monadic `Q_ī(c)`, where index `0` stands
//! for `c` itself and `i > 0` for its `i`-th parent. Propagation rules copy
//! `Q_ī` to every element whose scope holds the same arguments, so each rule
//! body can be read off one host.
//!
//! A rule is compiled once per assignment of host indices to its variables.
//! The host is one of the rule's variables when some index is `0` and a
//! fresh variable otherwise: an atom derived over two siblings is hosted
//! only by their common children.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::{finish, rule, var, Codec, TransformReport, View};
use crate::error::{Error, Result};
use crate::program::{Rule, Theory};
use crate::query::{ConjunctiveQuery, QAtom, Term, UnionQuery, Var};
use crate::signature::{Pred, Signature};
use crate::structure::{Elem, Structure};

/// Target rules beyond which compilation gives up.
pub const MAX_TARGET_RULES: usize = 50_000;

/// How a TGP atom of one TGD is stored: marker on the witness plus one
/// parent link per other position.
#[derive(Clone, Debug)]
struct Link {
    marker: Pred,
    witness: usize,
    /// Source positions of parents 1, 2, ….
    parents: Vec<usize>,
}

#[derive(Clone, Debug)]
pub(super) struct Hosts {
    parent: Vec<Pred>,
    links: BTreeMap<Pred, Vec<Link>>,
    mono: BTreeMap<Pred, BTreeMap<Vec<usize>, Pred>>,
}

impl Hosts {
    fn f(&self, i: usize) -> Pred {
        self.parent[i - 1]
    }

    pub(super) fn encode(&self, d: &Structure, mut out: Structure) -> Result<Structure> {
        let n = d.num_elems();
        let mut parents: Vec<Option<Vec<Elem>>> = vec![None; n];
        let mut hosted = Vec::new();
        for a in d.atoms() {
            let link = self.links.get(&a.pred).and_then(|l| l.first());
            match link {
                Some(l) if parents[a.args[l.witness].ix()].is_none() => {
                    let w = a.args[l.witness];
                    out.add(l.marker, &[w]);
                    let ps: Vec<Elem> = l.parents.iter().map(|&p| a.args[p]).collect();
                    for (i, &x) in ps.iter().enumerate() {
                        out.add(self.f(i + 1), &[x, w]);
                    }
                    parents[w.ix()] = Some(ps);
                }
                _ if self.mono.contains_key(&a.pred) => hosted.push(a),
                _ => {
                    return Err(Error::input(format!(
                        "fact {} gives {} a second birth atom",
                        d.show_atom(a),
                        d.name(a.args[link.unwrap().witness])
                    )))
                }
            }
        }
        for a in hosted {
            let index = |c: Elem| -> Option<Vec<usize>> {
                let ps = parents[c.ix()].as_deref().unwrap_or(&[]);
                a.args
                    .iter()
                    .map(|&x| {
                        if x == c {
                            Some(0)
                        } else {
                            ps.iter().position(|&p| p == x).map(|i| i + 1)
                        }
                    })
                    .collect()
            };
            let own = a.args.iter().copied();
            let host = own
                .chain((0..n as u32).map(Elem))
                .find_map(|c| index(c).map(|ix| (c, ix)));
            let Some((c, ix)) = host else {
                return Err(Error::input(format!(
                    "fact {} lies in the scope of no element",
                    d.show_atom(a)
                )));
            };
            out.add(self.mono[&a.pred][&ix], &[c]);
        }
        Ok(out)
    }
}

fn guard_of(body: &ConjunctiveQuery) -> Option<usize> {
    let all = body.used_vars();
    body.atoms.iter().position(|a| {
        let vs: BTreeSet<Var> = a.vars().collect();
        vs == all
    })
}

fn check(r: &Rule, i: usize, sig: &Signature) -> Result<()> {
    let bad = |why: &str| Err(Error::input(format!("rule {} `{}` {why}", i + 1, r.show(sig))));
    if guard_of(&r.body).is_none() {
        return bad("is not guarded");
    }
    let consts = r.body.atoms.iter().chain(&r.head).flat_map(|a| &a.args).any(|t| t.var().is_none());
    if consts || !r.body.eqs.is_empty() {
        return bad("mentions a constant");
    }
    if r.body.atoms.iter().chain(&r.head).any(|a| a.args.is_empty()) {
        return bad("has a nullary atom");
    }
    if r.is_tgd() {
        let ex = r.existentials();
        let ok = r.head.len() == 1
            && ex.len() == 1
            && r.head[0].args.iter().filter(|t| t.var() == Some(ex[0])).count() == 1;
        if !ok {
            return bad("is not a single-head TGD with one witness");
        }
    }
    Ok(())
}

/// Every tuple in `0..=k` of length `n`.
fn tuples(k: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..=k).map(move |i| {
                    let mut t = t.clone();
                    t.push(i);
                    t
                })
            })
            .collect();
    }
    out
}

fn digits(ix: &[usize]) -> String {
    ix.iter().map(|i| i.to_string()).collect()
}

struct Out {
    rules: Vec<Rule>,
    seen: HashSet<String>,
}

impl Out {
    fn push(&mut self, sig: &Signature, r: Rule) -> Result<()> {
        if self.seen.insert(r.show(sig)) {
            self.rules.push(r);
        }
        if self.rules.len() > MAX_TARGET_RULES {
            return Err(Error::Resource(format!(
                "guarded compilation exceeds {MAX_TARGET_RULES} rules"
            )));
        }
        Ok(())
    }
}

/// Body choice for one source atom.
#[derive(Clone, Copy)]
enum Choice {
    Link(usize),
    Mono,
}

/// Compiles a guarded theory, and optionally a guarded query, into a binary
/// theory. The query becomes a datalog rule deriving a fresh `Goal(x)`; the
/// translated query asks for `Goal_0`.
pub fn guarded_to_binary(t: &Theory, q: Option<&ConjunctiveQuery>) -> Result<TransformReport> {
    let mut sig = (*t.sig).clone();
    let mut src: Vec<Rule> = t.rules.clone();
    for (i, r) in src.iter().enumerate() {
        check(r, i, &t.sig)?;
    }
    let mut made: Vec<(Pred, String, String)> = Vec::new();
    let mut goal = None;
    if let Some(q) = q {
        let Some(&v) = q.used_vars().iter().next() else {
            return Err(Error::input("query has no variables"));
        };
        let g = sig.fresh_pred("Goal", 1);
        let r = Rule::new(q.clone(), vec![QAtom::new(g, [var(v)])]);
        if guard_of(&r.body).is_none() || !q.eqs.is_empty() || !q.constants().is_empty() {
            return Err(Error::input("query is not guarded"));
        }
        made.push((g, "query".into(), "goal".into()));
        src.push(r);
        goal = Some(g);
    }

    // Separate witness predicates: one marker per TGD, monadic copies for
    // everything a datalog rule or the data may state.
    let tgd_heads: BTreeSet<Pred> = src.iter().filter(|r| r.is_tgd()).map(|r| r.head[0].pred).collect();
    let dl_heads: BTreeSet<Pred> = src.iter().filter(|r| !r.is_tgd()).flat_map(|r| r.head.iter().map(|a| a.pred)).collect();
    let slots = src
        .iter()
        .filter(|r| r.is_tgd())
        .map(|r| r.head[0].args.len() - 1)
        .max()
        .unwrap_or(0);
    if slots > 9 {
        return Err(Error::Resource(format!("{slots} parent slots; at most 9 are supported")));
    }
    let mut links: BTreeMap<Pred, Vec<Link>> = BTreeMap::new();
    let mut own_link: BTreeMap<usize, (Pred, usize)> = BTreeMap::new();
    for (i, r) in src.iter().enumerate().filter(|(_, r)| r.is_tgd()) {
        let h = &r.head[0];
        let z = r.existentials()[0];
        let witness = h.args.iter().position(|t| t.var() == Some(z)).unwrap();
        let parents: Vec<usize> = (0..h.args.len()).filter(|&p| p != witness).collect();
        let order: String = parents.iter().chain([&witness]).map(|p| p.to_string()).collect();
        let name = t.sig.name(h.pred).to_string();
        let marker = sig.fresh_pred(&format!("{name}@{order}"), 1);
        made.push((marker, r.show(&t.sig), "birth marker".into()));
        let l = links.entry(h.pred).or_default();
        own_link.insert(i, (h.pred, l.len()));
        l.push(Link {
            marker,
            witness,
            parents,
        });
    }
    let parent: Vec<Pred> = (1..=slots)
        .map(|i| {
            let p = sig.fresh_pred(&format!("F{i}"), 2);
            made.push((p, "parent links".into(), format!("parent {i}")));
            p
        })
        .collect();
    let mut mono: BTreeMap<Pred, BTreeMap<Vec<usize>, Pred>> = BTreeMap::new();
    for p in sig.preds().take(t.sig.num_preds()).chain(goal).collect::<Vec<_>>() {
        let k = sig.arity(p);
        if k == 0 || (tgd_heads.contains(&p) && !dl_heads.contains(&p)) {
            continue;
        }
        let name = sig.name(p).to_string();
        let mut m = BTreeMap::new();
        for ix in tuples(slots, k) {
            let mp = sig.fresh_pred(&format!("{name}_{}", digits(&ix)), 1);
            made.push((mp, name.clone(), format!("hosted at indices {}", digits(&ix))));
            m.insert(ix, mp);
        }
        mono.insert(p, m);
    }
    let hosts = Hosts {
        parent,
        links,
        mono,
    };
    let mut steps: Vec<(String, usize)> = vec![
        ("separate witness predicates".into(), own_link.len()),
        ("parent links".into(), slots),
    ];

    let mut out = Out {
        rules: Vec::new(),
        seen: HashSet::new(),
    };
    let mut edges: BTreeMap<(usize, Vec<usize>), Pred> = BTreeMap::new();
    let mut tgd_variants = 0;
    let mut dl_variants = 0;
    let mut edge_rules: Vec<Rule> = Vec::new();
    for pass in [true, false] {
        for (ri, r) in src.iter().enumerate().filter(|(_, r)| r.is_tgd() == pass) {
            let choices: Vec<Vec<Choice>> = r
                .body
                .atoms
                .iter()
                .map(|a| {
                    let mut c: Vec<Choice> = (0..hosts.links.get(&a.pred).map_or(0, |l| l.len())).map(Choice::Link).collect();
                    if hosts.mono.contains_key(&a.pred) {
                        c.push(Choice::Mono);
                    }
                    c
                })
                .collect();
            let mut combo = vec![0usize; choices.len()];
            loop {
                let pick: Vec<Choice> = combo.iter().zip(&choices).map(|(&i, c)| c[i]).collect();
                let mut indexed: BTreeSet<Var> = BTreeSet::new();
                for (a, c) in r.body.atoms.iter().zip(&pick) {
                    if matches!(c, Choice::Mono) {
                        indexed.extend(a.vars());
                    }
                }
                if r.is_tgd() {
                    indexed.extend(r.frontier());
                } else {
                    indexed.extend(r.head.iter().flat_map(|a| a.vars()));
                }
                let indexed: Vec<Var> = indexed.into_iter().collect();
                for alpha in tuples(slots, indexed.len()) {
                    let v = variant(&hosts, &mut sig, r, &pick, &indexed, &alpha, ri, &own_link, &mut edges, &mut made, &mut edge_rules, &t.sig)?;
                    if pass {
                        tgd_variants += 1;
                    } else {
                        dl_variants += 1;
                    }
                    out.push(&sig, v)?;
                }
                // Next body choice.
                let mut k = 0;
                while k < combo.len() {
                    combo[k] += 1;
                    if combo[k] < choices[k].len() {
                        break;
                    }
                    combo[k] = 0;
                    k += 1;
                }
                if k == combo.len() {
                    break;
                }
            }
        }
        if pass {
            steps.push(("TGD variants".into(), tgd_variants));
            steps.push(("witness predicates".into(), edges.len()));
        }
    }
    steps.push(("datalog variants".into(), dl_variants));
    let before = out.rules.len();
    for r in edge_rules {
        out.push(&sig, r)?;
    }
    steps.push(("witness edges".into(), out.rules.len() - before));
    let before = out.rules.len();
    for (&p, m) in &hosts.mono {
        let k = sig.arity(p);
        for (i, &from) in m {
            for (j, &to) in m {
                if i != j {
                    out.push(&sig, propagate(&hosts, k, i, from, j, to))?;
                }
            }
        }
    }
    steps.push(("monadic propagation".into(), out.rules.len() - before));

    let target = finish(sig, out.rules, None);
    let mut rep = TransformReport::new("guarded2bin", t, target);
    for (p, s, role) in made {
        rep.note(p, &s, role);
    }
    for (&p, ls) in &hosts.links {
        let k = t.sig.arity(p);
        for l in ls {
            let mut v = ConjunctiveQuery::new();
            let args: Vec<Var> = (0..k).map(|i| v.var(&format!("A{i}"))).collect();
            let w = var(args[l.witness]);
            v.atom(l.marker, [w]);
            for (i, &pos) in l.parents.iter().enumerate() {
                v.atom(hosts.f(i + 1), [var(args[pos]), w]);
            }
            rep.views.entry(p).or_default().push(View { query: v, args });
        }
    }
    for (&p, m) in &hosts.mono {
        if Some(p) == goal {
            continue;
        }
        for (ix, &mp) in m {
            let mut v = ConjunctiveQuery::new();
            let h = v.var("H");
            let args: Vec<Var> = ix
                .iter()
                .enumerate()
                .map(|(i, &s)| if s == 0 { h } else { v.var(&format!("A{i}")) })
                .collect();
            v.atom(mp, [var(h)]);
            for (&s, &a) in ix.iter().zip(&args) {
                if s > 0 {
                    v.atom(hosts.f(s), [var(a), var(h)]);
                }
            }
            rep.views.entry(p).or_default().push(View { query: v, args });
        }
    }
    if let Some(g) = goal {
        let mut gq = ConjunctiveQuery::new();
        let x = gq.var("X");
        gq.atom(hosts.mono[&g][&vec![0]], [var(x)]);
        rep.query = Some(UnionQuery::single(gq));
    }
    rep.steps = steps;
    // Birth, marker and parent links, propagation to the host and to the
    // other scopes, and the goal.
    rep.stretch = 4;
    rep.codec = Codec::Guarded(hosts);
    Ok(rep)
}

/// One indexed copy of `r`.
#[allow(clippy::too_many_arguments)]
fn variant(
    hosts: &Hosts,
    sig: &mut Signature,
    r: &Rule,
    pick: &[Choice],
    indexed: &[Var],
    alpha: &[usize],
    ri: usize,
    own_link: &BTreeMap<usize, (Pred, usize)>,
    edges: &mut BTreeMap<(usize, Vec<usize>), Pred>,
    made: &mut Vec<(Pred, String, String)>,
    edge_rules: &mut Vec<Rule>,
    src_sig: &Signature,
) -> Result<Rule> {
    let mut q = ConjunctiveQuery::new();
    q.vars = r.body.vars.clone();
    // Index-0 variables are the host; equal positive indices name the same parent.
    let mut sub: Vec<Var> = (0..q.vars.len() as Var).collect();
    let mut first: BTreeMap<usize, Var> = BTreeMap::new();
    for (&v, &i) in indexed.iter().zip(alpha) {
        match first.get(&i) {
            Some(&w) => sub[v as usize] = w,
            None => {
                first.insert(i, v);
            }
        }
    }
    let h = match first.get(&0) {
        Some(&h) => h,
        None => q.fresh_var("H"),
    };
    let s = |t: &Term| var(sub[t.var().unwrap() as usize]);
    let ix = |v: Var| alpha[indexed.iter().position(|&w| w == v).unwrap()];
    let mut body = Vec::new();
    for (&i, &v) in &first {
        if i > 0 {
            body.push(QAtom::new(hosts.f(i), [var(v), var(h)]));
        }
    }
    for (a, c) in r.body.atoms.iter().zip(pick) {
        match *c {
            Choice::Link(k) => {
                let l = &hosts.links[&a.pred][k];
                let w = s(&a.args[l.witness]);
                body.push(QAtom::new(l.marker, [w]));
                for (i, &p) in l.parents.iter().enumerate() {
                    body.push(QAtom::new(hosts.f(i + 1), [s(&a.args[p]), w]));
                }
            }
            Choice::Mono => {
                let key: Vec<usize> = a.vars().map(ix).collect();
                body.push(QAtom::new(hosts.mono[&a.pred][&key], [var(h)]));
            }
        }
    }
    let head = if r.is_tgd() {
        let (pred, k) = own_link[&ri];
        let l = &hosts.links[&pred][k];
        let e = *edges.entry((ri, alpha.to_vec())).or_insert_with(|| {
            let stem = sig.name(l.marker).to_string();
            let p = sig.fresh_pred(&format!("E_{stem}_{}", digits(alpha)), 2);
            made.push((p, r.show(src_sig), format!("witness edge for indices {}", digits(alpha))));
            p
        });
        let z = r.existentials()[0];
        let h_args = &r.head[0].args;
        // E(h,z) ⇒ marker(z), and each parent of z is a parent or the host.
        let mut er = ConjunctiveQuery::new();
        let (eh, ez) = (er.var("Y"), er.var("Z"));
        let ea = QAtom::new(e, [var(eh), var(ez)]);
        edge_rules.push(rule(&er.vars, vec![ea.clone()], vec![QAtom::new(l.marker, [var(ez)])]));
        for (i, &p) in l.parents.iter().enumerate() {
            let x = h_args[p].var().unwrap();
            let j = ix(x);
            let mut rq = er.clone();
            let (b, xv) = if j == 0 {
                (vec![ea.clone()], eh)
            } else {
                let xv = rq.var("X");
                (vec![QAtom::new(hosts.f(j), [var(xv), var(eh)]), ea.clone()], xv)
            };
            edge_rules.push(rule(&rq.vars, b, vec![QAtom::new(hosts.f(i + 1), [var(xv), var(ez)])]));
        }
        vec![QAtom::new(e, [var(h), var(z)])]
    } else {
        r.head
            .iter()
            .map(|a| {
                let key: Vec<usize> = a.vars().map(ix).collect();
                QAtom::new(hosts.mono[&a.pred][&key], [var(h)])
            })
            .collect()
    };
    Ok(rule(&q.vars, body, head))
}

/// `Q_i(y) ∧ links(x̄,y,i) ∧ links(x̄,z,j) ⇒ Q_j(z)`.
fn propagate(hosts: &Hosts, k: usize, i: &[usize], from: Pred, j: &[usize], to: Pred) -> Rule {
    // Union-find over y, z, x1..xk.
    let mut up: Vec<usize> = (0..k + 2).collect();
    fn find(up: &mut [usize], a: usize) -> usize {
        if up[a] == a {
            a
        } else {
            let r = find(up, up[a]);
            up[a] = r;
            r
        }
    }
    let mut join = |a: usize, b: usize| {
        let (ra, rb) = (find(&mut up, a), find(&mut up, b));
        if ra != rb {
            up[ra.max(rb)] = ra.min(rb);
        }
    };
    for side in [(i, 0), (j, 1)] {
        let (ix, host) = side;
        for a in 0..k {
            if ix[a] == 0 {
                join(a + 2, host);
            }
            for b in a + 1..k {
                if ix[a] == ix[b] && ix[a] > 0 {
                    join(a + 2, b + 2);
                }
            }
        }
    }
    let mut q = ConjunctiveQuery::new();
    let names: Vec<String> = ["Y".to_string(), "Z".to_string()]
        .into_iter()
        .chain((1..=k).map(|a| format!("X{a}")))
        .collect();
    let mut ids = BTreeMap::new();
    let mut v = |n: usize| -> Term {
        let r = find(&mut up, n);
        var(*ids.entry(r).or_insert_with(|| q.var(&names[r])))
    };
    let (y, z) = (v(0), v(1));
    let mut body = vec![QAtom::new(from, [y])];
    let mut atoms = BTreeSet::new();
    for a in 0..k {
        let x = v(a + 2);
        if i[a] > 0 {
            atoms.insert(QAtom::new(hosts.f(i[a]), [x, y]));
        }
        if j[a] > 0 {
            atoms.insert(QAtom::new(hosts.f(j[a]), [x, z]));
        }
    }
    body.extend(atoms);
    let mut r = rule(&q.vars, body, vec![QAtom::new(to, [z])]);
    r.body.vars = q.vars;
    r
}
