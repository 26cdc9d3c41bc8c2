//! The non-oblivious parallel chase.

use std::collections::{BTreeMap, BTreeSet};

use crate::program::Theory;
use crate::query::{initial, search, Term, Var};
use crate::signature::Pred;
use crate::structure::{Atom, Elem, Structure};

pub const DEFAULT_DEPTH: usize = 64;
pub const DEFAULT_ELEMENTS: usize = 100_000;

/// Where a null came from: the rule that minted it and the values of the
/// rule's frontier variables, in variable order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct NullOrigin {
    pub rule: usize,
    pub frontier: Vec<Elem>,
}

/// A TGD trigger whose head has no witness yet.
pub type Demand = NullOrigin;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stop {
    Fixpoint,
    Depth,
    Elements,
}

#[derive(Clone, Debug)]
pub struct ChaseTrace {
    /// The last structure computed.
    pub result: Structure,
    /// Atoms added in each round; entry 0 holds the input atoms.
    pub added: Vec<Vec<Atom>>,
    /// Element count after each round.
    pub sizes: Vec<usize>,
    pub provenance: BTreeMap<Elem, NullOrigin>,
    pub stop: Stop,
}

impl ChaseTrace {
    pub fn rounds(&self) -> usize {
        self.added.len() - 1
    }

    /// `Chase^i`.
    pub fn round(&self, i: usize) -> Structure {
        let keep: Vec<Elem> = (0..self.sizes[i] as u32).map(Elem).collect();
        let mut s = self.result.restrict_elems(&keep).expect("prefix of the domain");
        let late: BTreeSet<&Atom> = self.added[i + 1..].iter().flatten().collect();
        if !late.is_empty() {
            s = s.filter_atoms(|a| !late.contains(a));
        }
        s
    }

    /// The round in which `e` was created.
    pub fn depth(&self, e: Elem) -> usize {
        self.sizes.partition_point(|&n| n <= e.ix())
    }

    pub fn nulls(&self) -> usize {
        self.provenance.len()
    }

    pub fn budget_exhausted(&self) -> bool {
        self.stop != Stop::Fixpoint
    }
}

/// Head of a fired TGD with its frontier values plugged in and existentials
/// numbered by first occurrence. Triggers with equal demands share nulls.
type HeadKey = Vec<(Pred, Vec<Result<Elem, usize>>)>;

struct Round {
    datalog: BTreeSet<Atom>,
    tgd: BTreeMap<HeadKey, NullOrigin>,
    demand: BTreeSet<Demand>,
}

fn triggers(c: &Structure, t: &Theory, with_tgds: bool) -> Round {
    let mut r = Round {
        datalog: BTreeSet::new(),
        tgd: BTreeMap::new(),
        demand: BTreeSet::new(),
    };
    for (ri, rule) in t.rules.iter().enumerate() {
        let Some(mut b) = initial(c, &rule.body, &[]) else {
            continue;
        };
        let tgd = rule.is_tgd();
        let frontier = rule.frontier();
        let ex = rule.existentials();
        let mut seen: BTreeSet<Vec<Elem>> = BTreeSet::new();
        let mut heads: Vec<Vec<Option<Elem>>> = Vec::new();
        search(c, &rule.body.atoms, &mut b, &mut |m| {
            if tgd {
                let fv: Vec<Elem> = frontier.iter().map(|&v| m[v as usize].unwrap()).collect();
                if seen.insert(fv) {
                    heads.push(m.to_vec());
                }
            } else {
                heads.push(m.to_vec());
            }
            true
        });
        for m in heads {
            if !tgd {
                for h in &rule.head {
                    let a = Atom::new(h.pred, h.args.iter().map(|t| value(c, t, &m)));
                    if !c.contains(&a) {
                        r.datalog.insert(a);
                    }
                }
                continue;
            }
            let mut hb = m.clone();
            let mut witnessed = false;
            search(c, &rule.head, &mut hb, &mut |_| {
                witnessed = true;
                false
            });
            if witnessed {
                continue;
            }
            let origin = NullOrigin {
                rule: ri,
                frontier: frontier.iter().map(|&v| m[v as usize].unwrap()).collect(),
            };
            if !with_tgds {
                r.demand.insert(origin);
                continue;
            }
            let key = head_key(rule, &ex, &m, c);
            r.tgd.entry(key).or_insert(origin);
        }
    }
    r
}

fn value(c: &Structure, t: &Term, m: &[Option<Elem>]) -> Elem {
    match *t {
        Term::Var(v) => m[v as usize].expect("head variable bound by the body"),
        Term::Const(k) => c.elem_of(k).expect("constant interpreted"),
    }
}

fn head_key(rule: &crate::program::Rule, ex: &[Var], m: &[Option<Elem>], c: &Structure) -> HeadKey {
    let mut order: Vec<Var> = Vec::new();
    rule.head
        .iter()
        .map(|h| {
            let args = h
                .args
                .iter()
                .map(|t| match *t {
                    Term::Var(v) if ex.contains(&v) => {
                        let i = order.iter().position(|&x| x == v).unwrap_or_else(|| {
                            order.push(v);
                            order.len() - 1
                        });
                        Err(i)
                    }
                    _ => Ok(value(c, t, m)),
                })
                .collect();
            (h.pred, args)
        })
        .collect()
}

fn new_nulls(key: &HeadKey) -> usize {
    key.iter()
        .flat_map(|(_, a)| a.iter())
        .filter_map(|x| x.err())
        .max()
        .map_or(0, |m| m + 1)
}

/// Applies one round; returns the added atoms, or `None` when the element
/// budget would be exceeded.
fn apply(
    c: &mut Structure,
    t: &Theory,
    provenance: &mut BTreeMap<Elem, NullOrigin>,
    max_elems: usize,
) -> Option<Vec<Atom>> {
    let r = triggers(c, t, true);
    let fresh: usize = r.tgd.keys().map(new_nulls).sum();
    if c.num_elems() + fresh > max_elems {
        return None;
    }
    let mut added: Vec<Atom> = r.datalog.into_iter().collect();
    for (key, origin) in r.tgd {
        let nulls: Vec<Elem> = (0..new_nulls(&key))
            .map(|_| {
                let e = c.add_elem(format!("_n{}", provenance.len() + 1));
                provenance.insert(e, origin.clone());
                e
            })
            .collect();
        for (p, args) in key {
            let args: Vec<Elem> = args.into_iter().map(|x| x.unwrap_or_else(|i| nulls[i])).collect();
            added.push(Atom::new(p, args));
        }
    }
    added.retain(|a| c.insert(a.clone()));
    Some(added)
}

/// One parallel round of the chase.
pub fn chase_step(c: &Structure, t: &Theory) -> Structure {
    let mut s = c.clone();
    apply(&mut s, t, &mut BTreeMap::new(), usize::MAX);
    s
}

/// Chases `c` for at most `depth` rounds, stopping early at a fixpoint or
/// before a round that would push the domain past `max_elems`.
pub fn chase(c: &Structure, t: &Theory, depth: usize, max_elems: usize) -> ChaseTrace {
    let mut s = c.clone();
    let mut added = vec![c.atoms().cloned().collect::<Vec<_>>()];
    let mut sizes = vec![c.num_elems()];
    let mut provenance = BTreeMap::new();
    let stop = loop {
        if added.len() > depth {
            break if triggers(&s, t, true).is_empty() { Stop::Fixpoint } else { Stop::Depth };
        }
        match apply(&mut s, t, &mut provenance, max_elems) {
            None => break Stop::Elements,
            Some(a) if a.is_empty() => break Stop::Fixpoint,
            Some(a) => {
                added.push(a);
                sizes.push(s.num_elems());
            }
        }
    };
    ChaseTrace {
        result: s,
        added,
        sizes,
        provenance,
        stop,
    }
}

impl Round {
    fn is_empty(&self) -> bool {
        self.datalog.is_empty() && self.tgd.is_empty()
    }
}

/// Closes `c` under the datalog rules of `t` and lists the TGD triggers of the
/// result that have no witness.
pub fn datalog_saturate(c: &Structure, t: &Theory) -> (Structure, Vec<Demand>) {
    let dl = t.datalog_only();
    let mut s = c.clone();
    loop {
        let r = triggers(&s, &dl, false);
        if r.datalog.is_empty() {
            break;
        }
        for a in r.datalog {
            s.insert(a);
        }
    }
    let demand = triggers(&s, t, false).demand.into_iter().collect();
    (s, demand)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Certainty {
    /// `Chase^k` is the first round satisfying the query.
    Entailed(usize),
    /// The chase reached a fixpoint without satisfying the query.
    NotEntailed,
    /// Not satisfied up to this many rounds.
    Unknown(usize),
}

/// Bounded certain-answer test for a Boolean reading of `q`.
pub fn certain(t: &Theory, d: &Structure, q: &crate::ConjunctiveQuery, depth: usize) -> Certainty {
    let mut s = d.clone();
    let mut provenance = BTreeMap::new();
    for k in 0..=depth {
        if crate::query::holds(&s, q) {
            return Certainty::Entailed(k);
        }
        if k == depth {
            break;
        }
        match apply(&mut s, t, &mut provenance, DEFAULT_ELEMENTS) {
            Some(a) if a.is_empty() => return Certainty::NotEntailed,
            Some(_) => {}
            None => return Certainty::Unknown(k),
        }
    }
    Certainty::Unknown(depth)
}
