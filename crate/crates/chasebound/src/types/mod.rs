//! Positive types, the `≡_n` quotient and conservativity.
//!
//! A pointed pattern with at most `b` non-constant elements holds at `e`
//! iff it maps into the substructure induced by some connected set of at most
//! `b` non-constants around `e` (constants come for free). So the type of `e`
//! is fixed, up to homomorphic equivalence, by the maximal such
//! neighbourhoods, and `type(d) ⊆ type(e)` iff every neighbourhood of `d`
//! maps into the structure at `e`.

mod catalog;

use std::collections::HashMap;

use crate::canon::{canonical_code, CanonInput};
use crate::error::{Error, Result};
use crate::hom::Compiled;
use crate::signature::Pred;
use crate::structure::{Atom, Elem, Structure};

pub use catalog::{build_catalog, fingerprint, Fingerprint, PatternCatalog, DEFAULT_MAX_CATALOG};

/// Which elements carry exact types, and how deep each element sits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    pub interior: Vec<bool>,
    pub depth: Vec<usize>,
}

impl Region {
    /// Every element interior.
    pub fn all(c: &Structure) -> Region {
        Region {
            interior: vec![true; c.num_elems()],
            depth: vec![0; c.num_elems()],
        }
    }

    /// Interior iff a constant or `depth + bound <= horizon`.
    pub fn from_depths(c: &Structure, depth: Vec<usize>, horizon: usize, bound: usize) -> Region {
        let interior = c
            .elems()
            .map(|e| c.is_const(e) || depth[e.ix()] + bound <= horizon)
            .collect();
        Region { interior, depth }
    }
}

/// A small pointed structure: element 0 is the point.
#[derive(Clone, Debug)]
pub struct Pattern {
    pub structure: Structure,
    pub point: Elem,
}

/// The graph on non-constants in which two elements are adjacent when they
/// share an atom or touch the same component of constants.
struct Graph<'a> {
    c: &'a Structure,
    adj: Vec<Vec<u32>>,
    comp_size: Vec<usize>,
}

/// Interned neighbourhood patterns plus scratch buffers.
struct Cache {
    codes: HashMap<Vec<u64>, u32>,
    raw: HashMap<Vec<u32>, u32>,
    mark: Vec<(u32, u32)>,
    stamp: u32,
    verts: Vec<Elem>,
    atoms: Vec<u32>,
    key: Vec<u32>,
    patterns: Vec<Pattern>,
    compiled: Vec<Compiled>,
}

pub(crate) struct Engine<'a> {
    g: Graph<'a>,
    cache: Cache,
    memo: HashMap<(u32, u32), bool>,
}

impl<'a> Graph<'a> {
    fn new(c: &'a Structure) -> Self {
        let n = c.num_elems();
        let ix = c.index();
        // Constants linked by all-constant atoms share a component.
        let mut root: Vec<usize> = (0..n).collect();
        fn find(r: &mut [usize], x: usize) -> usize {
            let mut x = x;
            while r[x] != x {
                r[x] = r[r[x]];
                x = r[x];
            }
            x
        }
        for a in &ix.atoms {
            if a.args.iter().all(|&e| c.is_const(e)) {
                for w in a.args.windows(2) {
                    let (x, y) = (find(&mut root, w[0].ix()), find(&mut root, w[1].ix()));
                    root[x.max(y)] = x.min(y);
                }
            }
        }
        let mut touch: HashMap<usize, Vec<u32>> = HashMap::new();
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
        for a in &ix.atoms {
            let vars: Vec<u32> = a.args.iter().filter(|&&e| !c.is_const(e)).map(|e| e.0).collect();
            for &u in &vars {
                for &v in &vars {
                    if u != v {
                        adj[u as usize].push(v);
                    }
                }
                for &k in a.args.iter().filter(|&&e| c.is_const(e)) {
                    touch.entry(find(&mut root, k.ix())).or_default().push(u);
                }
            }
        }
        for (_, mut vs) in touch {
            vs.sort_unstable();
            vs.dedup();
            for &u in &vs {
                for &v in &vs {
                    if u != v {
                        adj[u as usize].push(v);
                    }
                }
            }
        }
        for l in &mut adj {
            l.sort_unstable();
            l.dedup();
        }
        let mut comp_size = vec![0; n];
        let mut seen = vec![false; n];
        for s in 0..n {
            if seen[s] || c.is_const(Elem(s as u32)) {
                continue;
            }
            let mut stack = vec![s];
            let mut members = Vec::new();
            seen[s] = true;
            while let Some(v) = stack.pop() {
                members.push(v);
                for &u in &adj[v] {
                    if !seen[u as usize] {
                        seen[u as usize] = true;
                        stack.push(u as usize);
                    }
                }
            }
            for &v in &members {
                comp_size[v] = members.len();
            }
        }
        Graph { c, adj, comp_size }
    }

    /// Connected sets of exactly `k` non-constants containing `e`, each once.
    fn connected_sets(&self, e: Elem, k: usize, out: &mut dyn FnMut(&[u32])) {
        let n = self.c.num_elems();
        let mut in_sub = vec![false; n];
        let mut near = vec![0u32; n];
        let mut sub = vec![e.0];
        in_sub[e.ix()] = true;
        for &u in &self.adj[e.ix()] {
            near[u as usize] += 1;
        }
        let ext: Vec<u32> = self.adj[e.ix()].clone();
        self.extend(&mut sub, ext, k, &mut in_sub, &mut near, out);
    }

    fn extend(
        &self,
        sub: &mut Vec<u32>,
        mut ext: Vec<u32>,
        k: usize,
        in_sub: &mut [bool],
        near: &mut [u32],
        out: &mut dyn FnMut(&[u32]),
    ) {
        if sub.len() == k {
            out(sub);
            return;
        }
        while let Some(w) = ext.pop() {
            if sub.len() + 1 == k {
                sub.push(w);
                out(sub);
                sub.pop();
                continue;
            }
            let mut next = ext.clone();
            for &u in &self.adj[w as usize] {
                if !in_sub[u as usize] && near[u as usize] == 0 {
                    next.push(u);
                }
            }
            sub.push(w);
            in_sub[w as usize] = true;
            for &u in &self.adj[w as usize] {
                near[u as usize] += 1;
            }
            self.extend(sub, next, k, in_sub, near, out);
            for &u in &self.adj[w as usize] {
                near[u as usize] -= 1;
            }
            in_sub[w as usize] = false;
            sub.pop();
        }
    }
}

impl Cache {
    /// Interns the component of `e` in the structure induced by `set` plus
    /// all constants.
    fn pattern_of(&mut self, c: &Structure, e: Elem, set: &[u32]) -> u32 {
        let ix = c.index();
        self.stamp += 1;
        let stamp = self.stamp;
        self.verts.clear();
        self.verts.extend(set.iter().map(|&v| Elem(v)));
        self.verts.sort_unstable();
        for (i, v) in self.verts.iter().enumerate() {
            self.mark[v.ix()] = (stamp, i as u32);
        }
        self.atoms.clear();
        let mut head = 0;
        while head < self.verts.len() {
            let v = self.verts[head];
            head += 1;
            for &ai in &ix.incident[v.ix()] {
                let a = &ix.atoms[ai as usize];
                if !a.args.iter().all(|&x| c.is_const(x) || self.mark[x.ix()].0 == stamp) {
                    continue;
                }
                self.atoms.push(ai);
                for &x in &a.args {
                    if self.mark[x.ix()].0 != stamp {
                        self.mark[x.ix()] = (stamp, self.verts.len() as u32);
                        self.verts.push(x);
                    }
                }
            }
        }
        self.atoms.sort_unstable();
        self.atoms.dedup();
        let point = self.mark[e.ix()].1;
        self.key.clear();
        self.key.push(point);
        self.key.push(self.verts.len() as u32);
        for &x in &self.verts {
            self.key.push(c.const_of(x).map_or(0, |k| k.0 + 1));
        }
        for &ai in &self.atoms {
            let a = &ix.atoms[ai as usize];
            self.key.push(a.pred.0);
            for x in &a.args {
                self.key.push(self.mark[x.ix()].1);
            }
        }
        if let Some(&id) = self.raw.get(&self.key[..]) {
            return id;
        }
        let local: Vec<(Pred, Vec<usize>)> = self
            .atoms
            .iter()
            .map(|&ai| {
                let a = &ix.atoms[ai as usize];
                (a.pred, a.args.iter().map(|x| self.mark[x.ix()].1 as usize).collect())
            })
            .collect();
        let verts = self.verts.clone();
        let id = self.intern(c, point as usize, &verts, &local);
        self.raw.insert(self.key.clone(), id);
        id
    }

    fn intern(&mut self, c: &Structure, point: usize, verts: &[Elem], atoms: &[(Pred, Vec<usize>)]) -> u32 {
        let colors = verts
            .iter()
            .enumerate()
            .map(|(i, &x)| match c.const_of(x) {
                Some(k) => 2 + 2 * k.0 as u64 + u64::from(i == point),
                None => u64::from(i == point),
            })
            .collect();
        let edges = atoms.iter().map(|(p, a)| (p.0 as u64, a.clone())).collect();
        let code = canonical_code(&CanonInput { colors, edges });
        if let Some(&id) = self.codes.get(&code) {
            return id;
        }
        // Stored with the point first.
        let order: Vec<usize> = std::iter::once(point).chain((0..verts.len()).filter(|&i| i != point)).collect();
        let mut pos = vec![0; verts.len()];
        for (new, &old) in order.iter().enumerate() {
            pos[old] = new;
        }
        let mut s = Structure::new(c.sig_arc().clone());
        for (k, &old) in order.iter().enumerate() {
            let x = verts[old];
            let el = s.add_elem(if k == 0 { "Y".to_string() } else { format!("X{k}") });
            if let Some(cst) = c.const_of(x) {
                s.set_name(el, c.sig().const_name(cst).to_string());
                s.bind_const(cst, el).expect("fresh constant");
            }
        }
        for (p, a) in atoms {
            s.add(*p, &a.iter().map(|&i| Elem(pos[i] as u32)).collect::<Vec<_>>());
        }
        let id = self.patterns.len() as u32;
        self.compiled.push(Compiled::new(&s, Elem(0)));
        self.patterns.push(Pattern {
            structure: s,
            point: Elem(0),
        });
        self.codes.insert(code, id);
        id
    }
}

impl<'a> Engine<'a> {
    pub(crate) fn new(c: &'a Structure) -> Self {
        Engine {
            g: Graph::new(c),
            cache: Cache {
                codes: HashMap::new(),
                raw: HashMap::new(),
                mark: vec![(0, 0); c.num_elems()],
                stamp: 0,
                verts: Vec::new(),
                atoms: Vec::new(),
                key: Vec::new(),
                patterns: Vec::new(),
                compiled: Vec::new(),
            },
            memo: HashMap::new(),
        }
    }

    pub(crate) fn pattern(&self, id: u32) -> &Pattern {
        &self.cache.patterns[id as usize]
    }

    /// Ids of the maximal neighbourhood patterns of `e` with at most `b`
    /// non-constants, sorted.
    pub(crate) fn nset(&mut self, e: Elem, b: usize) -> Vec<u32> {
        let g = &self.g;
        let c = g.c;
        let cache = &mut self.cache;
        let mut ids = Vec::new();
        let k = if c.is_const(e) { 1 } else { b.min(g.comp_size[e.ix()]) };
        if k <= 1 {
            ids.push(cache.pattern_of(c, e, &[e.0]));
        } else {
            g.connected_sets(e, k, &mut |s| ids.push(cache.pattern_of(c, e, s)));
        }
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub(crate) fn maps(&mut self, pid: u32, target: &Structure, e: Elem) -> bool {
        if std::ptr::eq(target, self.g.c) {
            if let Some(&r) = self.memo.get(&(pid, e.0)) {
                return r;
            }
            let r = self.cache.compiled[pid as usize].maps_to(target, e);
            self.memo.insert((pid, e.0), r);
            return r;
        }
        self.cache.compiled[pid as usize].maps_to(target, e)
    }

    fn included(&mut self, pats: &[u32], e: Elem) -> bool {
        let c = self.g.c;
        pats.iter().all(|&p| self.maps(p, c, e))
    }

    /// `levels[b][x]` labels the `≡_b` class of `x`, for `b` in `0..=bound`.
    pub(crate) fn levels(&mut self, bound: usize) -> Vec<Vec<u32>> {
        let c = self.g.c;
        let mut cur: Vec<u32> = c
            .elems()
            .map(|e| if c.is_const(e) { 1 + e.0 } else { 0 })
            .collect();
        let mut out = vec![cur.clone()];
        for b in 1..=bound {
            let mut groups: HashMap<u32, Vec<Elem>> = HashMap::new();
            for e in c.elems() {
                groups.entry(cur[e.ix()]).or_default().push(e);
            }
            let mut groups: Vec<Vec<Elem>> = groups.into_values().collect();
            groups.sort_by_key(|g| g[0]);
            let mut next = vec![0u32; c.num_elems()];
            let mut label = 0u32;
            for g in groups {
                if g.len() == 1 {
                    next[g[0].ix()] = label;
                    label += 1;
                    continue;
                }
                let mut by_set: Vec<(Vec<u32>, Vec<Elem>)> = Vec::new();
                let mut pos: HashMap<Vec<u32>, usize> = HashMap::new();
                for &e in &g {
                    let s = self.nset(e, b);
                    match pos.get(&s) {
                        Some(&i) => by_set[i].1.push(e),
                        None => {
                            pos.insert(s.clone(), by_set.len());
                            by_set.push((s, vec![e]));
                        }
                    }
                }
                // Groups with different neighbourhoods may still be
                // homomorphically equivalent.
                let mut clusters: Vec<(Vec<u32>, Elem, u32)> = Vec::new();
                for (s, members) in by_set {
                    let rep = members[0];
                    let mut found = None;
                    for (cs, crep, cl) in &clusters {
                        let (cs, crep, cl) = (cs.clone(), *crep, *cl);
                        if self.included(&s, crep) && self.included(&cs, rep) {
                            found = Some(cl);
                            break;
                        }
                    }
                    let l = found.unwrap_or_else(|| {
                        clusters.push((s, rep, label));
                        label += 1;
                        label - 1
                    });
                    for e in members {
                        next[e.ix()] = l;
                    }
                }
            }
            out.push(next.clone());
            cur = next;
            if label as usize == c.num_elems() {
                for _ in b + 1..=bound {
                    out.push(cur.clone());
                }
                break;
            }
        }
        out
    }
}

/// `≡_b` classes of all elements: `x` and `y` share a label iff their
/// positive types with at most `b` non-constant elements agree.
pub fn type_classes(c: &Structure, b: usize) -> Vec<u32> {
    Engine::new(c).levels(b).pop().unwrap()
}

/// The projection `q_n` and the quotient structure `M_n`.
#[derive(Clone, Debug)]
pub struct QuotientMap {
    pub n: usize,
    /// Source element → quotient element.
    pub class_of: Vec<Elem>,
    pub interior: Vec<bool>,
    pub quotient: Structure,
}

impl QuotientMap {
    pub fn q(&self, e: Elem) -> Elem {
        self.class_of[e.ix()]
    }

    pub fn num_classes(&self) -> usize {
        self.quotient.num_elems()
    }

    /// Source elements of each class.
    pub fn members(&self) -> Vec<Vec<Elem>> {
        let mut out = vec![Vec::new(); self.num_classes()];
        for (i, q) in self.class_of.iter().enumerate() {
            out[q.ix()].push(Elem(i as u32));
        }
        out
    }
}

/// Types are compared with patterns of up to `n + 1` elements, which makes a
/// chain collapse to `b_0 … b_n` with the loop on `b_n`.
pub fn type_bound(n: usize) -> usize {
    n + 1
}

pub fn quotient(c: &Structure, n: usize, region: &Region) -> Result<QuotientMap> {
    Ok(quotients(c, &[n], region)?.pop().unwrap())
}

/// Quotients for several `n` sharing one refinement pass.
pub fn quotients(c: &Structure, ns: &[usize], region: &Region) -> Result<Vec<QuotientMap>> {
    let jobs: Vec<(usize, &Region)> = ns.iter().map(|&n| (n, region)).collect();
    quotients_in(c, &jobs)
}

/// Like [`quotients`], with a region of its own for each `n`.
pub fn quotients_in(c: &Structure, jobs: &[(usize, &Region)]) -> Result<Vec<QuotientMap>> {
    let max = jobs.iter().map(|&(n, _)| type_bound(n)).max().unwrap_or(0);
    let levels = Engine::new(c).levels(max);
    jobs.iter().map(|&(n, r)| assemble(c, n, r, &levels)).collect()
}

fn assemble(c: &Structure, n: usize, region: &Region, levels: &[Vec<u32>]) -> Result<QuotientMap> {
    let bound = type_bound(n);
    let fin = &levels[bound];
    let interior: Vec<bool> = c
        .elems()
        .map(|e| c.is_const(e) || region.interior[e.ix()])
        .collect();
    let mut id_of_label: HashMap<u32, u32> = HashMap::new();
    let mut class: Vec<Option<u32>> = vec![None; c.num_elems()];
    for e in c.elems().filter(|e| interior[e.ix()]) {
        let next = id_of_label.len() as u32;
        class[e.ix()] = Some(*id_of_label.entry(fin[e.ix()]).or_insert(next));
    }
    for f in c.elems().filter(|e| !interior[e.ix()]) {
        let mut chosen = None;
        for b in (1..=bound).rev() {
            let l = levels[b][f.ix()];
            let best = c
                .elems()
                .filter(|x| interior[x.ix()] && levels[b][x.ix()] == l)
                .max_by(|x, y| {
                    region.depth[x.ix()]
                        .cmp(&region.depth[y.ix()])
                        .then(class[y.ix()].cmp(&class[x.ix()]))
                });
            if let Some(x) = best {
                chosen = class[x.ix()];
                break;
            }
        }
        match chosen {
            Some(k) => class[f.ix()] = Some(k),
            None => {
                return Err(Error::ExtendPrefix(c.name(f).to_string()))
            }
        }
    }
    let k = id_of_label.len();
    let mut m = Structure::new(c.sig_arc().clone());
    let mut named = vec![None; k];
    for e in c.elems() {
        if let Some(cst) = c.const_of(e) {
            named[class[e.ix()].unwrap() as usize] = Some(cst);
        }
    }
    for (i, cst) in named.iter().enumerate() {
        let el = m.add_elem(format!("_b{i}"));
        if let Some(&cst) = cst.as_ref() {
            m.set_name(el, c.sig().const_name(cst).to_string());
            m.bind_const(cst, el)?;
        }
    }
    let class_of: Vec<Elem> = class.iter().map(|k| Elem(k.unwrap())).collect();
    for a in c.atoms() {
        m.insert(Atom::new(a.pred, a.args.iter().map(|e| class_of[e.ix()])));
    }
    Ok(QuotientMap {
        n,
        class_of,
        interior,
        quotient: m,
    })
}

#[derive(Clone, Debug)]
pub enum Conservativity {
    Conservative,
    /// A pattern true at `q(element)` in the quotient but false at `element`.
    Witness { element: Elem, pattern: Pattern },
}

impl Conservativity {
    pub fn is_conservative(&self) -> bool {
        matches!(self, Conservativity::Conservative)
    }
}

fn base_preds(s: &Structure) -> Vec<Pred> {
    s.sig().preds().filter(|&p| !s.sig().is_color(p)).collect()
}

/// Checks that `q` preserves the color-free positive `m`-type of every
/// interior element of `colored`.
pub fn check_conservative(colored: &Structure, q: &QuotientMap, m: usize) -> Conservativity {
    let preds = base_preds(colored);
    let c = colored.restrict_preds(&preds).expect("own predicates");
    let mq = q.quotient.restrict_preds(&preds).expect("own predicates");
    let mut eng = Engine::new(&mq);
    let mut cache: HashMap<Elem, Vec<u32>> = HashMap::new();
    for e in c.elems().filter(|e| q.interior[e.ix()]) {
        let img = q.q(e);
        let pats = cache.entry(img).or_insert_with(|| eng.nset(img, m)).clone();
        for p in pats {
            if !eng.maps(p, &c, e) {
                let pat = eng.pattern(p).clone();
                return Conservativity::Witness {
                    element: e,
                    pattern: minimize(pat, &c, e),
                };
            }
        }
    }
    Conservativity::Conservative
}

/// Drops atoms while the pattern still fails to map at `e`.
fn minimize(p: Pattern, c: &Structure, e: Elem) -> Pattern {
    let mut cur = p;
    loop {
        let atoms: Vec<Atom> = cur.structure.atoms().cloned().collect();
        let mut shrunk = None;
        for a in &atoms {
            let smaller = point_component(&cur.structure.filter_atoms(|b| b != a), cur.point);
            if !crate::hom_exists(&smaller.structure, smaller.point, c, e) {
                shrunk = Some(smaller);
                break;
            }
        }
        match shrunk {
            Some(s) => cur = s,
            None => return cur,
        }
    }
}

fn point_component(s: &Structure, point: Elem) -> Pattern {
    let ix = s.index();
    let mut keep = vec![point];
    let mut seen = vec![false; s.num_elems()];
    seen[point.ix()] = true;
    let mut head = 0;
    while head < keep.len() {
        let v = keep[head];
        head += 1;
        for u in ix.neighbours(v) {
            if !seen[u.ix()] {
                seen[u.ix()] = true;
                keep.push(u);
            }
        }
    }
    let (structure, _) = s.restrict_elems_map(&keep).expect("own elements");
    Pattern {
        structure,
        point: Elem(0),
    }
}

/// A pattern's query text, for witnesses.
pub fn show_pattern(p: &Pattern) -> String {
    crate::ConjunctiveQuery::of_pointed(&p.structure, p.point).show(p.structure.sig())
}
