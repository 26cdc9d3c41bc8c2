//! Query graphs and the normalisation calculus for queries with an
//! undirected cycle.
//!
//! Variables are vertices and binary atoms between variables are directed
//! edges. Atoms touching a constant act as unary marks and add no edge.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::query::{ConjunctiveQuery, QAtom, Term, Var};
use crate::signature::Pred;

/// `R1(z1, z) ∧ R2(z2, z)`: two atoms of the query sharing their target.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Heart {
    pub r1: Pred,
    pub r2: Pred,
    pub z: Var,
    pub z1: Var,
    pub z2: Var,
    /// Positions of the two atoms in the query.
    pub atoms: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Shape {
    /// The undirected graph is a forest.
    Tree,
    /// A shortest directed cycle, as consecutive variables.
    DirectedCycle(Vec<Var>),
    /// An undirected cycle without a directed one.
    Heart(Heart),
    /// Some atom has arity above two.
    Other,
}

#[derive(Clone, Debug)]
pub struct QueryGraph {
    pub query: ConjunctiveQuery,
    /// `(from, to, pred, atom index)`.
    pub edges: Vec<(Var, Var, Pred, usize)>,
    pub shape: Shape,
}

fn edges_of(q: &ConjunctiveQuery) -> Vec<(Var, Var, Pred, usize)> {
    q.atoms
        .iter()
        .enumerate()
        .filter_map(|(i, a)| match a.args.as_slice() {
            [Term::Var(x), Term::Var(y)] => Some((*x, *y, a.pred, i)),
            _ => None,
        })
        .collect()
}

fn shortest_directed_cycle(n: usize, edges: &[(Var, Var, Pred, usize)]) -> Option<Vec<Var>> {
    let mut succ = vec![Vec::new(); n];
    for &(x, y, _, _) in edges {
        succ[x as usize].push(y);
    }
    let mut best: Option<Vec<Var>> = None;
    for s in 0..n {
        // BFS back to s.
        let mut prev = vec![None; n];
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(s);
        let mut found = None;
        let mut seen = vec![false; n];
        seen[s] = true;
        'bfs: while let Some(v) = queue.pop_front() {
            for &u in &succ[v] {
                let u = u as usize;
                if u == s {
                    found = Some(v);
                    break 'bfs;
                }
                if !seen[u] {
                    seen[u] = true;
                    prev[u] = Some(v);
                    queue.push_back(u);
                }
            }
        }
        if let Some(last) = found {
            let mut cyc = vec![last as Var];
            let mut x = last;
            while x != s {
                x = prev[x].unwrap();
                cyc.push(x as Var);
            }
            cyc.reverse();
            if best.as_ref().map_or(true, |b| cyc.len() < b.len()) {
                best = Some(cyc);
            }
        }
    }
    best
}

/// Some undirected cycle as a list of edge indices, walking around it.
fn undirected_cycle(n: usize, edges: &[(Var, Var, Pred, usize)]) -> Option<Vec<usize>> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (k, &(x, y, _, _)) in edges.iter().enumerate() {
        adj[x as usize].push((y as usize, k));
        adj[y as usize].push((x as usize, k));
    }
    let mut depth = vec![usize::MAX; n];
    let mut via: Vec<Option<(usize, usize)>> = vec![None; n];
    for root in 0..n {
        if depth[root] != usize::MAX {
            continue;
        }
        depth[root] = 0;
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            for &(u, k) in &adj[v] {
                if via[v].map(|(_, e)| e) == Some(k) || via[u].map(|(_, e)| e) == Some(k) {
                    continue;
                }
                if depth[u] == usize::MAX {
                    depth[u] = depth[v] + 1;
                    via[u] = Some((v, k));
                    stack.push(u);
                } else {
                    // Closing edge: walk both ends up to the meeting point.
                    let (mut a, mut b) = (v, u);
                    let mut left = Vec::new();
                    let mut right = Vec::new();
                    while a != b {
                        if depth[a] >= depth[b] {
                            let (p, e) = via[a]?;
                            left.push(e);
                            a = p;
                        } else {
                            let (p, e) = via[b]?;
                            right.push(e);
                            b = p;
                        }
                    }
                    let mut cyc: Vec<usize> = left.into_iter().rev().collect();
                    cyc.push(k);
                    cyc.extend(right);
                    return Some(cyc);
                }
            }
        }
    }
    None
}

/// Tags `q` as a tree, a query with a directed cycle, or a heart form.
pub fn classify(q: &ConjunctiveQuery) -> QueryGraph {
    let edges = edges_of(q);
    let n = q.vars.len();
    let shape = if q.atoms.iter().any(|a| a.args.len() > 2) {
        Shape::Other
    } else if let Some(c) = shortest_directed_cycle(n, &edges) {
        Shape::DirectedCycle(c)
    } else if let Some(cyc) = undirected_cycle(n, &edges) {
        // Without a directed cycle some vertex of the cycle takes both of
        // its cycle edges as incoming.
        let k = cyc.len();
        let heart = (0..k).find_map(|i| {
            let (e1, e2) = (edges[cyc[i]], edges[cyc[(i + 1) % k]]);
            (e1.1 == e2.1 && e1.3 != e2.3).then_some(Heart {
                r1: e1.2,
                r2: e2.2,
                z: e1.1,
                z1: e1.0,
                z2: e2.0,
                atoms: (e1.3, e2.3),
            })
        });
        match heart {
            Some(h) => Shape::Heart(h),
            None => Shape::Other,
        }
    } else {
        Shape::Tree
    };
    QueryGraph {
        query: q.clone(),
        edges,
        shape,
    }
}

/// `Σ occ(x) · smaller(x)`, where `smaller(x)` counts the other variables
/// with a directed path to `x`.
pub fn measure(q: &ConjunctiveQuery) -> usize {
    let n = q.vars.len();
    let edges = edges_of(q);
    let mut succ = vec![Vec::new(); n];
    for &(x, y, _, _) in &edges {
        succ[x as usize].push(y as usize);
    }
    let mut smaller = vec![0usize; n];
    for s in 0..n {
        let mut seen = vec![false; n];
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for &u in &succ[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        for (x, &hit) in seen.iter().enumerate() {
            if hit && x != s {
                smaller[x] += 1;
            }
        }
    }
    let mut occ = vec![0usize; n];
    for a in &q.atoms {
        for v in a.vars() {
            occ[v as usize] += 1;
        }
    }
    (0..n).map(|x| occ[x] * smaller[x]).sum()
}

/// How the two predecessors of an element colored like `z` are related.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Link {
    /// They coincide.
    Same,
    /// `P(first, second)`, where `first` is the `R1`-predecessor.
    Forward(Pred),
    /// `P(second, first)`.
    Backward(Pred),
}

#[derive(Clone, Debug)]
pub struct Candidate {
    pub query: ConjunctiveQuery,
    pub link: Link,
    /// Forced by the supplied neighbourhood information.
    pub marked: bool,
}

fn substitute(q: &ConjunctiveQuery, from: Var, to: Var) -> ConjunctiveQuery {
    let m = |t: &Term| match *t {
        Term::Var(v) if v == from => Term::Var(to),
        t => t,
    };
    let mut out = q.clone();
    out.atoms = q.atoms.iter().map(|a| QAtom::new(a.pred, a.args.iter().map(m))).collect();
    out.eqs = q.eqs.iter().map(|&(v, c)| (if v == from { to } else { v }, c)).collect();
    out.distinguished = q.distinguished.map(|v| if v == from { to } else { v });
    out
}

fn without(q: &ConjunctiveQuery, atom: usize) -> ConjunctiveQuery {
    let mut out = q.clone();
    out.atoms.remove(atom);
    out
}

/// The three rewrites of a heart form.
///
/// 1. drop `R2(z2,z)` and unify `z2` with `z1`;
/// 2. drop `R2(z2,z)` and add `P(z2,z1)`;
/// 3. drop `R1(z1,z)` and add `P(z1,z2)`.
///
/// `link` is what the neighbourhood of `z`'s color says about its two
/// predecessors; the matching candidate is marked. Without it no candidate is
/// marked and `R1` stands in for `P`.
pub fn normalize_step(g: &QueryGraph, link: Option<Link>) -> Result<Vec<Candidate>> {
    let Shape::Heart(h) = g.shape else {
        return Err(Error::input("query is not in heart form"));
    };
    let q = &g.query;
    let p_fwd = match link {
        Some(Link::Backward(p)) | Some(Link::Forward(p)) => p,
        _ => h.r1,
    };
    let unify = substitute(&without(q, h.atoms.1), h.z2, h.z1).compact();
    let mut second = without(q, h.atoms.1);
    second.atoms.push(QAtom::new(p_fwd, [Term::Var(h.z2), Term::Var(h.z1)]));
    let mut third = without(q, h.atoms.0);
    third.atoms.push(QAtom::new(p_fwd, [Term::Var(h.z1), Term::Var(h.z2)]));
    let cands = [
        (unify, Link::Same),
        (second.compact(), Link::Backward(p_fwd)),
        (third.compact(), Link::Forward(p_fwd)),
    ];
    Ok(cands
        .into_iter()
        .map(|(query, l)| Candidate {
            query,
            link: l,
            marked: link == Some(l),
        })
        .collect())
}

/// Repeatedly normalises with `pick` until the query is no longer a heart
/// form, returning every query visited. Stops after `limit` steps.
pub fn normalize_loop(
    q: &ConjunctiveQuery,
    limit: usize,
    mut pick: impl FnMut(&QueryGraph, &[Candidate]) -> usize,
) -> Vec<QueryGraph> {
    let mut out = vec![classify(q)];
    for _ in 0..limit {
        let g = out.last().unwrap();
        let Ok(c) = normalize_step(g, None) else {
            break;
        };
        let i = pick(g, &c);
        let next = classify(&c[i].query);
        out.push(next);
    }
    out
}

/// Variables used by binary edges, for sanity checks.
pub fn edge_vars(g: &QueryGraph) -> BTreeSet<Var> {
    g.edges.iter().flat_map(|&(x, y, _, _)| [x, y]).collect()
}
