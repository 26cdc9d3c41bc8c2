//! Predecessor sets, VTDAG validation and natural colorings.
//!
//! A coloring gives every element one unary marker `K_h_l`: the hue `h`
//! separates elements that lie within `m` predecessor steps of each other,
//! and the lightness `l` names the isomorphism type of the element's
//! predecessor neighbourhood.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::canon::{canonical_code, CanonInput};
use crate::error::{Error, Result};
use crate::structure::{Elem, Structure};

/// Upper limit on hues tried by [`natural_coloring`].
pub const MAX_HUES: u32 = 64;

/// `P(e)`: `e` together with its non-constant direct predecessors. Just `{e}`
/// for a constant.
pub fn direct_predecessors(c: &Structure, e: Elem) -> Vec<Elem> {
    let mut out = vec![e];
    if !c.is_const(e) {
        let ix = c.index();
        for &ai in &ix.incident[e.ix()] {
            let a = &ix.atoms[ai as usize];
            if a.args.len() == 2 && a.args[1] == e && !c.is_const(a.args[0]) {
                out.push(a.args[0]);
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// `P_k(e)`, the union of `P` over `P_{k-1}(e)`, with `P_0 = P`.
pub fn predecessors(c: &Structure, e: Elem, k: usize) -> Vec<Elem> {
    let mut cur = direct_predecessors(c, e);
    for _ in 0..k {
        let mut next: Vec<Elem> = cur.iter().flat_map(|&a| direct_predecessors(c, a)).collect();
        next.sort_unstable();
        next.dedup();
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    /// The non-constant part has a directed cycle.
    Cycle,
    /// Two non-constants reach the same element through one relation.
    SharedPredecessor,
    /// Two members of some `P(e)` are not predecessors of one another.
    NotClique,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub elements: Vec<Elem>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ViolationKind::Cycle => "directed cycle",
            ViolationKind::SharedPredecessor => "shared predecessor",
            ViolationKind::NotClique => "predecessors not a clique",
        };
        let ids: Vec<String> = self.elements.iter().map(|e| e.0.to_string()).collect();
        write!(f, "{kind} at elements {}", ids.join(","))
    }
}

/// Checks the VTDAG conditions and returns the first breach.
pub fn vtdag_check(c: &Structure) -> std::result::Result<(), Violation> {
    if let Some(cycle) = find_cycle(c) {
        return Err(Violation {
            kind: ViolationKind::Cycle,
            elements: cycle,
        });
    }
    let ix = c.index();
    for e in c.elems().filter(|&e| !c.is_const(e)) {
        let mut seen: HashMap<crate::Pred, Elem> = HashMap::new();
        for &ai in &ix.incident[e.ix()] {
            let a = &ix.atoms[ai as usize];
            if a.args.len() != 2 || a.args[1] != e || c.is_const(a.args[0]) {
                continue;
            }
            if let Some(&d) = seen.get(&a.pred) {
                if d != a.args[0] {
                    return Err(Violation {
                        kind: ViolationKind::SharedPredecessor,
                        elements: vec![d, a.args[0], e],
                    });
                }
            }
            seen.insert(a.pred, a.args[0]);
        }
        let p = direct_predecessors(c, e);
        for (i, &d) in p.iter().enumerate() {
            for &d2 in &p[i + 1..] {
                let linked = direct_predecessors(c, d).contains(&d2) || direct_predecessors(c, d2).contains(&d);
                if !linked {
                    return Err(Violation {
                        kind: ViolationKind::NotClique,
                        elements: vec![d, d2, e],
                    });
                }
            }
        }
    }
    Ok(())
}

fn non_const_succ(c: &Structure) -> Vec<Vec<Elem>> {
    let mut succ = vec![Vec::new(); c.num_elems()];
    for a in c.atoms() {
        if a.args.len() == 2 && !c.is_const(a.args[0]) && !c.is_const(a.args[1]) {
            succ[a.args[0].ix()].push(a.args[1]);
        }
    }
    succ
}

fn find_cycle(c: &Structure) -> Option<Vec<Elem>> {
    let succ = non_const_succ(c);
    // 0 unseen, 1 on stack, 2 done
    let mut state = vec![0u8; c.num_elems()];
    let mut parent = vec![None; c.num_elems()];
    for s in c.elems() {
        if state[s.ix()] != 0 {
            continue;
        }
        let mut stack = vec![(s, 0usize)];
        state[s.ix()] = 1;
        while let Some(&mut (v, ref mut i)) = stack.last_mut() {
            if *i < succ[v.ix()].len() {
                let u = succ[v.ix()][*i];
                *i += 1;
                match state[u.ix()] {
                    0 => {
                        state[u.ix()] = 1;
                        parent[u.ix()] = Some(v);
                        stack.push((u, 0));
                    }
                    1 => {
                        let mut cyc = vec![v];
                        let mut x = v;
                        while x != u {
                            x = parent[x.ix()].unwrap();
                            cyc.push(x);
                        }
                        cyc.reverse();
                        return Some(cyc);
                    }
                    _ => {}
                }
            } else {
                state[v.ix()] = 2;
                stack.pop();
            }
        }
    }
    None
}

/// Longest directed path into each element within the non-constant part.
/// Constants sit at depth 0. Requires acyclicity.
pub fn dag_depth(c: &Structure) -> Vec<usize> {
    let succ = non_const_succ(c);
    let n = c.num_elems();
    let mut indeg = vec![0usize; n];
    for s in &succ {
        for u in s {
            indeg[u.ix()] += 1;
        }
    }
    let mut depth = vec![0; n];
    let mut queue: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    while let Some(v) = queue.pop() {
        for u in &succ[v] {
            depth[u.ix()] = depth[u.ix()].max(depth[v] + 1);
            indeg[u.ix()] -= 1;
            if indeg[u.ix()] == 0 {
                queue.push(u.ix());
            }
        }
    }
    depth
}

/// A structure with one `(hue, lightness)` per element.
#[derive(Clone, Debug)]
pub struct Coloring {
    base: Structure,
    colors: Vec<(u32, u32)>,
    colored: Structure,
}

impl Coloring {
    /// Attaches the given colors; `colors[i]` belongs to element `i`.
    pub fn from_colors(base: &Structure, colors: Vec<(u32, u32)>) -> Result<Coloring> {
        if colors.len() != base.num_elems() {
            return Err(Error::input(format!(
                "{} colors for {} elements",
                colors.len(),
                base.num_elems()
            )));
        }
        if base.atoms().any(|a| base.sig().is_color(a.pred)) {
            return Err(Error::input("structure is already colored"));
        }
        let mut sig = base.sig().clone();
        let preds: Vec<_> = colors.iter().map(|&(h, l)| sig.color(h, l)).collect();
        let mut colored = base.clone().upgrade(Arc::new(sig))?;
        for (i, p) in preds.into_iter().enumerate() {
            colored.add(p, &[Elem(i as u32)]);
        }
        Ok(Coloring {
            base: base.clone(),
            colors,
            colored,
        })
    }

    /// Hue `depth mod period` and lightness 0 everywhere.
    pub fn periodic(base: &Structure, depth: &[usize], period: u32) -> Result<Coloring> {
        let period = period.max(1);
        let colors = base.elems().map(|e| ((depth[e.ix()] as u32) % period, 0)).collect();
        Coloring::from_colors(base, colors)
    }

    pub fn base(&self) -> &Structure {
        &self.base
    }

    /// The base structure plus one color atom per element.
    pub fn colored(&self) -> &Structure {
        &self.colored
    }

    pub fn into_colored(self) -> Structure {
        self.colored
    }

    pub fn hue(&self, e: Elem) -> u32 {
        self.colors[e.ix()].0
    }

    pub fn lightness(&self, e: Elem) -> u32 {
        self.colors[e.ix()].1
    }

    pub fn colors(&self) -> &[(u32, u32)] {
        &self.colors
    }

    pub fn num_hues(&self) -> usize {
        let mut h: Vec<u32> = self.colors.iter().map(|c| c.0).collect();
        h.sort_unstable();
        h.dedup();
        h.len()
    }

    pub fn num_lightnesses(&self) -> usize {
        let mut l: Vec<u32> = self.colors.iter().map(|c| c.1).collect();
        l.sort_unstable();
        l.dedup();
        l.len()
    }
}

/// Isomorphism code of `C ↾ (P(e) ∪ C_con)` with `e` marked.
fn neighbourhood_code(c: &Structure, e: Elem) -> Vec<u64> {
    let mut keep = direct_predecessors(c, e);
    keep.extend(c.elems().filter(|&x| c.is_const(x) && x != e));
    let (sub, back) = c.restrict_elems_map(&keep).expect("own elements");
    let colors = back
        .iter()
        .map(|&x| match c.const_of(x) {
            Some(k) => 2 + 2 * k.0 as u64 + u64::from(x == e),
            None => u64::from(x == e),
        })
        .collect();
    let edges = sub
        .atoms()
        .map(|a| (a.pred.0 as u64, a.args.iter().map(|x| x.ix()).collect()))
        .collect();
    canonical_code(&CanonInput { colors, edges })
}

/// Lightness ids: equal iff the marked predecessor neighbourhoods are
/// isomorphic. Ids follow first appearance.
pub fn lightness(c: &Structure) -> Vec<u32> {
    let mut ids: HashMap<Vec<u64>, u32> = HashMap::new();
    c.elems()
        .map(|e| {
            let next = ids.len() as u32;
            *ids.entry(neighbourhood_code(c, e)).or_insert(next)
        })
        .collect()
}

/// Pairs that must get different hues: `e′ ∈ P_m(e)`, `e′ ≠ e`, both ways.
fn conflicts(c: &Structure, m: usize) -> Vec<Vec<Elem>> {
    let mut adj = vec![Vec::new(); c.num_elems()];
    for e in c.elems().filter(|&e| !c.is_const(e)) {
        for d in predecessors(c, e, m) {
            if d != e {
                adj[e.ix()].push(d);
                adj[d.ix()].push(e);
            }
        }
    }
    for l in &mut adj {
        l.sort_unstable();
        l.dedup();
    }
    adj
}

/// A natural coloring of a VTDAG.
///
/// Elements are visited in order of decreasing depth and each takes the first
/// free hue counting up from `depth mod H`, so long repetitive stretches get
/// periodic hues. `H` starts at `period_hint` and grows until the conflict
/// graph is properly colored.
pub fn natural_coloring(c: &Structure, m: usize, period_hint: Option<u32>) -> Result<Coloring> {
    if let Err(v) = vtdag_check(c) {
        return Err(Error::input(format!("not a VTDAG: {v}")));
    }
    let light = lightness(c);
    let depth = dag_depth(c);
    let adj = conflicts(c, m);
    let mut order: Vec<Elem> = c.elems().filter(|&e| !c.is_const(e)).collect();
    order.sort_by(|a, b| depth[b.ix()].cmp(&depth[a.ix()]).then(a.cmp(b)));
    let mut hues = period_hint.unwrap_or(1).max(1);
    loop {
        if hues > MAX_HUES {
            return Err(Error::Resource(format!(
                "natural coloring needs more than {MAX_HUES} hues"
            )));
        }
        if let Some(h) = assign_hues(&depth, &order, &adj, hues) {
            let colors = c.elems().map(|e| (h[e.ix()], light[e.ix()])).collect();
            return Coloring::from_colors(c, colors);
        }
        hues += 1;
    }
}

fn assign_hues(depth: &[usize], order: &[Elem], adj: &[Vec<Elem>], hues: u32) -> Option<Vec<u32>> {
    let mut hue: Vec<Option<u32>> = vec![None; depth.len()];
    for &e in order {
        let taken: Vec<u32> = adj[e.ix()].iter().filter_map(|d| hue[d.ix()]).collect();
        let start = (depth[e.ix()] % hues as usize) as u32;
        let h = (0..hues).map(|k| (start + k) % hues).find(|h| !taken.contains(h))?;
        hue[e.ix()] = Some(h);
    }
    Some(hue.into_iter().map(|h| h.unwrap_or(0)).collect())
}

/// Checks both naturality clauses; returns the offending pair on failure.
pub fn audit_natural(col: &Coloring, m: usize) -> std::result::Result<(), (Elem, Elem)> {
    let c = col.base();
    for e in c.elems().filter(|&e| !c.is_const(e)) {
        for d in predecessors(c, e, m) {
            if d != e && col.hue(d) == col.hue(e) {
                return Err((d, e));
            }
        }
    }
    let mut seen: HashMap<u32, (Elem, Vec<u64>)> = HashMap::new();
    for e in c.elems() {
        let code = neighbourhood_code(c, e);
        match seen.get(&col.lightness(e)) {
            Some((d, k)) if *k != code => return Err((*d, e)),
            Some(_) => {}
            None => {
                seen.insert(col.lightness(e), (e, code));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::parse_program;

    fn chain(len: usize) -> Structure {
        let mut text = String::from("data:\n");
        for i in 1..len {
            text.push_str(&format!("E(_a{}, _a{}).\n", i - 1, i));
        }
        parse_program(&text).unwrap().data
    }

    fn el(c: &Structure, name: &str) -> Elem {
        c.elem_by_name(name).unwrap()
    }

    #[test]
    fn predecessor_sets_on_a_chain() {
        let c = chain(4);
        let names = |v: Vec<Elem>| v.into_iter().map(|e| c.name(e).to_string()).collect::<Vec<_>>();
        assert_eq!(names(predecessors(&c, el(&c, "_a3"), 0)), ["_a2", "_a3"]);
        assert_eq!(names(predecessors(&c, el(&c, "_a3"), 1)), ["_a1", "_a2", "_a3"]);
    }

    #[test]
    fn constants_have_no_predecessors() {
        let c = parse_program("data:\nE(a, b).\nE(_x, c).").unwrap().data;
        for k in 0..3 {
            assert_eq!(predecessors(&c, el(&c, "c"), k), vec![el(&c, "c")]);
        }
    }

    #[test]
    fn vtdag_conditions() {
        assert!(vtdag_check(&chain(6)).is_ok());
        let c = parse_program("data:\nE(_a, _c).\nE(_b, _c).").unwrap().data;
        assert_eq!(vtdag_check(&c).unwrap_err().kind, ViolationKind::SharedPredecessor);
        let c = parse_program("data:\nE(_a, _b).\nE(_b, _a).").unwrap().data;
        assert_eq!(vtdag_check(&c).unwrap_err().kind, ViolationKind::Cycle);
        let c = parse_program("data:\nE(_a, _c).\nF(_b, _c).").unwrap().data;
        assert_eq!(vtdag_check(&c).unwrap_err().kind, ViolationKind::NotClique);
        let c = parse_program("data:\nE(_a, _c).\nF(_b, _c).\nG(_a, _b).").unwrap().data;
        assert!(vtdag_check(&c).is_ok());
        // Constants are outside the DAG.
        let c = parse_program("data:\nE(a, _c).\nE(_b, _c).\nE(_c, a).").unwrap().data;
        assert!(vtdag_check(&c).is_ok());
    }

    #[test]
    fn chain_hues_repeat_with_period_m_plus_two() {
        // P_m reaches m + 1 steps back, so m + 2 hues are forced.
        let c = chain(20);
        let col = natural_coloring(&c, 2, Some(3)).unwrap();
        assert_eq!(col.num_hues(), 4);
        for i in 4..20u32 {
            assert_eq!(col.hue(Elem(i)), col.hue(Elem(i - 4)));
        }
        // The root stands alone; everything else shares one lightness.
        assert_eq!(col.num_lightnesses(), 2);
        assert!(audit_natural(&col, 2).is_ok());
    }

    #[test]
    fn hint_raises_the_hue_count() {
        let col = natural_coloring(&chain(20), 1, Some(5)).unwrap();
        assert_eq!(col.num_hues(), 5);
        assert!(audit_natural(&col, 1).is_ok());
    }

    #[test]
    fn binary_tree_is_colorable() {
        let mut text = String::from("data:\n");
        for i in 1..31 {
            let p = if i % 2 == 1 { "L" } else { "R" };
            text.push_str(&format!("{p}(_t{}, _t{i}).\n", (i - 1) / 2));
        }
        let c = parse_program(&text).unwrap().data;
        assert!(vtdag_check(&c).is_ok());
        for i in 1..31 {
            assert_eq!(direct_predecessors(&c, Elem(i)).len(), 2);
        }
        let col = natural_coloring(&c, 2, None).unwrap();
        assert!(audit_natural(&col, 2).is_ok());
        assert!(col.num_hues() <= 4);
    }

    #[test]
    fn single_element() {
        let c = parse_program("data:\nU(_x).").unwrap().data;
        let col = natural_coloring(&c, 3, None).unwrap();
        assert_eq!((col.num_hues(), col.num_lightnesses()), (1, 1));
        assert_eq!(col.colored().len(), 2);
    }

    #[test]
    fn refuses_non_vtdags() {
        let c = parse_program("data:\nE(_a, _b).\nE(_b, _a).").unwrap().data;
        assert!(natural_coloring(&c, 1, None).is_err());
    }

    #[test]
    fn colored_structure_drops_back_to_the_base() {
        let c = chain(5);
        let col = natural_coloring(&c, 1, None).unwrap();
        assert_eq!(col.colored().uncolored().to_facts(), c.to_facts());
    }
}
