use smallvec::SmallVec;

use crate::signature::{Const, Pred};
use crate::structure::{Atom, Elem, Structure};

/// A pointed pattern prepared for repeated homomorphism tests.
#[derive(Clone, Debug)]
pub(crate) struct Compiled {
    consts: Vec<Option<Const>>,
    atoms: Vec<(Pred, SmallVec<[u32; 3]>)>,
    inc: Vec<Vec<usize>>,
    order: Vec<usize>,
}

impl Compiled {
    pub(crate) fn new(s: &Structure, point: Elem) -> Self {
        let n = s.num_elems();
        let consts = s.elems().map(|e| s.const_of(e)).collect();
        let atoms: Vec<(Pred, SmallVec<[u32; 3]>)> = s
            .atoms()
            .map(|a| (a.pred, a.args.iter().map(|e| e.0).collect()))
            .collect();
        let mut inc = vec![Vec::new(); n];
        for (i, (_, args)) in atoms.iter().enumerate() {
            for &v in args {
                if inc[v as usize].last() != Some(&i) {
                    inc[v as usize].push(i);
                }
            }
        }
        let mut order = Vec::with_capacity(n);
        let mut seen = vec![false; n];
        let mut roots: Vec<usize> = vec![point.ix()];
        roots.extend(0..n);
        for r in roots {
            if seen[r] {
                continue;
            }
            seen[r] = true;
            let start = order.len();
            order.push(r);
            let mut head = start;
            while head < order.len() {
                let v = order[head];
                head += 1;
                for &i in &inc[v] {
                    for &u in &atoms[i].1 {
                        if !seen[u as usize] {
                            seen[u as usize] = true;
                            order.push(u as usize);
                        }
                    }
                }
            }
        }
        Compiled {
            consts,
            atoms,
            inc,
            order,
        }
    }

    pub(crate) fn maps_to(&self, target: &Structure, e: Elem) -> bool {
        let mut h: Vec<Option<Elem>> = vec![None; self.consts.len()];
        if h.is_empty() {
            return true;
        }
        self.step(target, e, 0, &mut h)
    }

    fn consistent(&self, target: &Structure, v: usize, h: &[Option<Elem>]) -> bool {
        let set = &target.index().set;
        self.inc[v].iter().all(|&i| {
            let (p, args) = &self.atoms[i];
            let img: Option<SmallVec<[Elem; 3]>> = args.iter().map(|&u| h[u as usize]).collect();
            match img {
                Some(args) => set.contains(&Atom { pred: *p, args }),
                None => true,
            }
        })
    }

    fn candidates(&self, target: &Structure, v: usize, h: &[Option<Elem>]) -> Option<Vec<Elem>> {
        let ix = target.index();
        let mut best: Option<Vec<Elem>> = None;
        for &i in &self.inc[v] {
            let (p, args) = &self.atoms[i];
            let Some(pv) = args.iter().position(|&u| u as usize == v) else {
                continue;
            };
            let anchor = args
                .iter()
                .enumerate()
                .find_map(|(pos, &u)| h[u as usize].map(|x| (pos, x)));
            if let Some((pos, x)) = anchor {
                let mut c: Vec<Elem> = ix
                    .at(*p, pos, x)
                    .iter()
                    .map(|&a| ix.atoms[a as usize].args[pv])
                    .collect();
                c.sort();
                c.dedup();
                if best.as_ref().map_or(true, |b| c.len() < b.len()) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn step(&self, target: &Structure, point_img: Elem, k: usize, h: &mut Vec<Option<Elem>>) -> bool {
        if k == self.order.len() {
            return true;
        }
        let v = self.order[k];
        let cands: Vec<Elem> = if k == 0 {
            vec![point_img]
        } else if let Some(c) = self.consts[v] {
            target.elem_of(c).into_iter().collect()
        } else {
            match self.candidates(target, v, h) {
                Some(c) => c,
                None => target.elems().collect(),
            }
        };
        for x in cands {
            if let Some(c) = self.consts[v] {
                if target.elem_of(c) != Some(x) {
                    continue;
                }
            }
            h[v] = Some(x);
            if self.consistent(target, v, h) && self.step(target, point_img, k + 1, h) {
                return true;
            }
            h[v] = None;
        }
        false
    }
}

/// Whether some homomorphism maps `pattern` to `target` with `p ↦ e`,
/// preserving atoms and sending constants to their interpretations.
pub fn hom_exists(pattern: &Structure, p: Elem, target: &Structure, e: Elem) -> bool {
    Compiled::new(pattern, p).maps_to(target, e)
}

/// Whether some homomorphism maps `a` into `b` (unpointed).
pub fn hom_into(a: &Structure, b: &Structure) -> bool {
    if a.num_elems() == 0 {
        return true;
    }
    // Components map independently; test each from a root.
    let ix = a.index();
    let mut comp = vec![usize::MAX; a.num_elems()];
    let mut roots = Vec::new();
    for r in a.elems() {
        if comp[r.ix()] != usize::MAX {
            continue;
        }
        let id = roots.len();
        roots.push(r);
        let mut stack = vec![r];
        comp[r.ix()] = id;
        while let Some(x) = stack.pop() {
            for y in ix.neighbours(x) {
                if comp[y.ix()] == usize::MAX {
                    comp[y.ix()] = id;
                    stack.push(y);
                }
            }
        }
    }
    roots.iter().enumerate().all(|(id, &r)| {
        let members: Vec<Elem> = a.elems().filter(|e| comp[e.ix()] == id).collect();
        let (part, back) = a.restrict_elems_map(&members).expect("own elements");
        let root = Elem(back.iter().position(|&o| o == r).unwrap() as u32);
        let c = Compiled::new(&part, root);
        match part.const_of(root) {
            Some(k) => b.elem_of(k).is_some_and(|x| c.maps_to(b, x)),
            None => b.elems().any(|x| c.maps_to(b, x)),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::{holds_at, ConjunctiveQuery};
    use crate::signature::Signature;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn sig() -> Arc<Signature> {
        let mut s = Signature::new();
        s.add_pred("E", 2).unwrap();
        s.add_pred("U", 1).unwrap();
        s.add_const("a");
        Arc::new(s)
    }

    fn cycle(sig: &Arc<Signature>, n: usize) -> Structure {
        let e = sig.pred("E").unwrap();
        let mut s = Structure::new(sig.clone());
        let xs: Vec<Elem> = (0..n).map(|i| s.add_elem(format!("v{i}"))).collect();
        for i in 0..n {
            s.add(e, &[xs[i], xs[(i + 1) % n]]);
        }
        s
    }

    #[test]
    fn three_cycle_into_triangle_not_chain() {
        let sig = sig();
        let e = sig.pred("E").unwrap();
        let pat = cycle(&sig, 3);
        let tri = cycle(&sig, 3);
        assert!(hom_exists(&pat, Elem(0), &tri, Elem(1)));
        let mut chain = Structure::new(sig.clone());
        let xs: Vec<Elem> = (0..20).map(|i| chain.add_elem(format!("a{i}"))).collect();
        for w in xs.windows(2) {
            chain.add(e, w);
        }
        assert!(!hom_exists(&pat, Elem(0), &chain, Elem(0)));
        let mut single = Structure::new(sig.clone());
        let p = single.add_elem("y");
        assert!(hom_exists(&single, p, &chain, Elem(5)));
    }

    #[test]
    fn constants_are_pinned() {
        let sig = sig();
        let a = sig.constant("a").unwrap();
        let e = sig.pred("E").unwrap();
        let mut pat = Structure::new(sig.clone());
        let y = pat.add_elem("y");
        let ca = pat.const_elem(a);
        pat.add(e, &[ca, y]);
        let mut t = Structure::new(sig.clone());
        let ta = t.const_elem(a);
        let b = t.add_elem("b");
        let c = t.add_elem("c");
        t.add(e, &[ta, b]);
        t.add(e, &[c, c]);
        assert!(hom_exists(&pat, y, &t, b));
        assert!(!hom_exists(&pat, y, &t, c));
        let mut q = Structure::new(sig.clone());
        let qa = q.const_elem(a);
        assert!(hom_exists(&q, qa, &t, ta));
        assert!(!hom_exists(&q, qa, &t, b));
    }

    fn arb_structure(sig: Arc<Signature>, n: usize) -> impl Strategy<Value = Structure> {
        let e = sig.pred("E").unwrap();
        let u = sig.pred("U").unwrap();
        (
            proptest::collection::vec((0..n, 0..n), 0..(2 * n)),
            proptest::collection::vec(0..n, 0..n),
        )
            .prop_map(move |(edges, unary)| {
                let mut s = Structure::new(sig.clone());
                for i in 0..n {
                    s.add_elem(format!("v{i}"));
                }
                for (a, b) in edges {
                    s.add(e, &[Elem(a as u32), Elem(b as u32)]);
                }
                for a in unary {
                    s.add(u, &[Elem(a as u32)]);
                }
                s
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]
        #[test]
        fn hom_agrees_with_query_evaluation(
            pat in arb_structure(sig(), 3),
            target in arb_structure(sig(), 5),
            p in 0u32..3,
            e in 0u32..5,
        ) {
            let q = ConjunctiveQuery::of_pointed(&pat, Elem(p));
            let y = q.distinguished.unwrap();
            prop_assert_eq!(
                hom_exists(&pat, Elem(p), &target, Elem(e)),
                holds_at(&target, &q, &[(y, Elem(e))])
            );
        }
    }
}
