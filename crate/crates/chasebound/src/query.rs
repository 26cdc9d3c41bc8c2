use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::canon::{self, CanonInput};
use crate::signature::{Const, Pred, Signature};
use crate::structure::{Elem, Structure};

pub type Var = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Term {
    Var(Var),
    Const(Const),
}

impl Term {
    pub fn var(self) -> Option<Var> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QAtom {
    pub pred: Pred,
    pub args: SmallVec<[Term; 3]>,
}

impl QAtom {
    pub fn new(pred: Pred, args: impl IntoIterator<Item = Term>) -> Self {
        QAtom {
            pred,
            args: args.into_iter().collect(),
        }
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.args.iter().filter_map(|t| t.var())
    }
}

/// Existential-positive conjunction of atoms and `x = c` equalities.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConjunctiveQuery {
    pub vars: Vec<String>,
    pub atoms: Vec<QAtom>,
    pub eqs: Vec<(Var, Const)>,
    pub distinguished: Option<Var>,
}

impl ConjunctiveQuery {
    pub fn new() -> Self {
        Self::default()
    }

    /// Variable id for `name`, created on first use.
    pub fn var(&mut self, name: &str) -> Var {
        match self.vars.iter().position(|v| v == name) {
            Some(i) => i as Var,
            None => {
                self.vars.push(name.to_string());
                (self.vars.len() - 1) as Var
            }
        }
    }

    pub fn fresh_var(&mut self, base: &str) -> Var {
        if !self.vars.iter().any(|v| v == base) {
            return self.var(base);
        }
        let mut k = self.vars.len();
        loop {
            let name = format!("{base}{k}");
            if !self.vars.contains(&name) {
                return self.var(&name);
            }
            k += 1;
        }
    }

    pub fn atom(&mut self, pred: Pred, args: impl IntoIterator<Item = Term>) -> &mut Self {
        self.atoms.push(QAtom::new(pred, args));
        self
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    /// Variables that occur in an atom or an equality.
    pub fn used_vars(&self) -> BTreeSet<Var> {
        let mut s: BTreeSet<Var> = self.atoms.iter().flat_map(|a| a.vars()).collect();
        s.extend(self.eqs.iter().map(|&(v, _)| v));
        s.extend(self.distinguished);
        s
    }

    /// Drops unused variables and duplicate atoms, renumbering the rest.
    pub fn compact(&self) -> ConjunctiveQuery {
        let used = self.used_vars();
        let mut map = vec![None; self.vars.len()];
        let mut out = ConjunctiveQuery::new();
        for &v in &used {
            map[v as usize] = Some(out.var(&self.vars[v as usize]));
        }
        let m = |t: &Term| match *t {
            Term::Var(v) => Term::Var(map[v as usize].unwrap()),
            c => c,
        };
        let mut seen = BTreeSet::new();
        for a in &self.atoms {
            let na = QAtom::new(a.pred, a.args.iter().map(m));
            if seen.insert(na.clone()) {
                out.atoms.push(na);
            }
        }
        let mut eqs: Vec<(Var, Const)> = self
            .eqs
            .iter()
            .map(|&(v, c)| (map[v as usize].unwrap(), c))
            .collect();
        eqs.sort();
        eqs.dedup();
        out.eqs = eqs;
        out.distinguished = self.distinguished.map(|v| map[v as usize].unwrap());
        out
    }

    pub fn constants(&self) -> BTreeSet<Const> {
        let mut s: BTreeSet<Const> = self
            .atoms
            .iter()
            .flat_map(|a| a.args.iter())
            .filter_map(|t| match t {
                Term::Const(c) => Some(*c),
                _ => None,
            })
            .collect();
        s.extend(self.eqs.iter().map(|&(_, c)| c));
        s
    }

    /// The canonical query of a pointed structure: one variable per
    /// non-constant element, constants inlined, the point distinguished.
    pub fn of_pointed(s: &Structure, point: Elem) -> ConjunctiveQuery {
        let mut q = ConjunctiveQuery::new();
        let mut var_of = vec![None; s.num_elems()];
        let mut term = |q: &mut ConjunctiveQuery, e: Elem| match s.const_of(e) {
            Some(c) => Term::Const(c),
            None => *var_of[e.ix()].get_or_insert_with(|| Term::Var(q.var(&format!("X{}", e.0)))),
        };
        let y = q.var("Y");
        q.distinguished = Some(y);
        for a in s.atoms() {
            let args: Vec<Term> = a
                .args
                .iter()
                .map(|&e| if e == point { Term::Var(y) } else { term(&mut q, e) })
                .collect();
            q.atom(a.pred, args);
        }
        if let Some(c) = s.const_of(point) {
            q.eqs.push((y, c));
        }
        q
    }

    /// Input for canonical labeling: variables are vertices; constants
    /// become extra vertices with their own color.
    pub(crate) fn canon_input(&self) -> CanonInput {
        let consts: Vec<Const> = self.constants().into_iter().collect();
        let nv = self.vars.len();
        let mut colors: Vec<u64> = (0..nv)
            .map(|v| if self.distinguished == Some(v as Var) { 1 } else { 0 })
            .collect();
        colors.extend(consts.iter().map(|c| 2 + c.0 as u64));
        let vertex = |t: &Term| match *t {
            Term::Var(v) => v as usize,
            Term::Const(c) => nv + consts.iter().position(|&k| k == c).unwrap(),
        };
        let mut edges: Vec<(u64, Vec<usize>)> = self
            .atoms
            .iter()
            .map(|a| (a.pred.0 as u64, a.args.iter().map(vertex).collect()))
            .collect();
        for &(v, c) in &self.eqs {
            edges.push((u64::MAX, vec![v as usize, vertex(&Term::Const(c))]));
        }
        CanonInput { colors, edges }
    }

    /// A key equal for two queries iff they are isomorphic (variables renamed).
    pub fn iso_key(&self) -> Vec<u64> {
        canon::canonical_code(&self.compact().canon_input())
    }

    pub fn show(&self, sig: &Signature) -> String {
        let t = |t: &Term| match *t {
            Term::Var(v) => self.vars[v as usize].clone(),
            Term::Const(c) => sig.const_name(c).to_string(),
        };
        let mut parts: Vec<String> = self
            .atoms
            .iter()
            .map(|a| {
                let args: Vec<String> = a.args.iter().map(t).collect();
                format!("{}({})", sig.name(a.pred), args.join(","))
            })
            .collect();
        for &(v, c) in &self.eqs {
            parts.push(format!("{} = {}", self.vars[v as usize], sig.const_name(c)));
        }
        let used = self.used_vars();
        let vars: Vec<&str> = used.iter().map(|&v| self.vars[v as usize].as_str()).collect();
        if vars.is_empty() {
            format!("{}.", parts.join(", "))
        } else {
            format!("exists {}. {}.", vars.join(","), parts.join(", "))
        }
    }
}

/// A non-empty disjunction of conjunctive queries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnionQuery {
    pub disjuncts: Vec<ConjunctiveQuery>,
}

impl UnionQuery {
    pub fn single(q: ConjunctiveQuery) -> Self {
        UnionQuery { disjuncts: vec![q] }
    }

    pub fn holds(&self, c: &Structure) -> bool {
        self.disjuncts.iter().any(|q| holds(c, q))
    }

    pub fn show(&self, sig: &Signature) -> String {
        let parts: Vec<String> = self.disjuncts.iter().map(|q| q.show(sig)).collect();
        parts.join(" ;\n")
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "?{v}"),
            Term::Const(c) => write!(f, "#{}", c.0),
        }
    }
}

/// Backtracking join of `atoms` against `c`, extending `b`. The callback sees
/// every match of the atoms (unconstrained variables stay `None`) and returns
/// `false` to stop. Returns `false` iff stopped.
pub(crate) fn search(
    c: &Structure,
    atoms: &[QAtom],
    b: &mut Vec<Option<Elem>>,
    f: &mut dyn FnMut(&[Option<Elem>]) -> bool,
) -> bool {
    let mut consts: Vec<Option<Elem>> = Vec::new();
    for a in atoms {
        for t in &a.args {
            if let Term::Const(k) = *t {
                let ix = k.0 as usize;
                if consts.len() <= ix {
                    consts.resize(ix + 1, None);
                }
                match c.elem_of(k) {
                    Some(e) => consts[ix] = Some(e),
                    None => return true,
                }
            }
        }
    }
    let mut done = vec![false; atoms.len()];
    go(c, atoms, &consts, &mut done, atoms.len(), b, f)
}

fn go(
    c: &Structure,
    atoms: &[QAtom],
    consts: &[Option<Elem>],
    done: &mut [bool],
    left: usize,
    b: &mut Vec<Option<Elem>>,
    f: &mut dyn FnMut(&[Option<Elem>]) -> bool,
) -> bool {
    if left == 0 {
        return f(b);
    }
    let ix = c.index();
    let value = |t: &Term, b: &[Option<Elem>]| match *t {
        Term::Var(v) => b[v as usize],
        Term::Const(k) => consts[k.0 as usize],
    };
    let mut best: Option<(usize, &[u32])> = None;
    for (i, a) in atoms.iter().enumerate() {
        if done[i] {
            continue;
        }
        let mut cands = ix.with_pred(a.pred);
        for (pos, t) in a.args.iter().enumerate() {
            if let Some(e) = value(t, b) {
                let l = ix.at(a.pred, pos, e);
                if l.len() < cands.len() {
                    cands = l;
                }
            }
        }
        if best.map_or(true, |(_, bc)| cands.len() < bc.len()) {
            best = Some((i, cands));
        }
    }
    let (i, cands) = best.expect("an atom is left");
    done[i] = true;
    let a = &atoms[i];
    let mut bound: SmallVec<[usize; 4]> = SmallVec::new();
    for &ci in cands {
        let cand = &ix.atoms[ci as usize];
        let mut ok = true;
        for (t, &e) in a.args.iter().zip(&cand.args) {
            match *t {
                Term::Const(k) => {
                    if consts[k.0 as usize] != Some(e) {
                        ok = false;
                        break;
                    }
                }
                Term::Var(v) => match b[v as usize] {
                    Some(x) if x != e => {
                        ok = false;
                        break;
                    }
                    Some(_) => {}
                    None => {
                        b[v as usize] = Some(e);
                        bound.push(v as usize);
                    }
                },
            }
        }
        let cont = !ok || go(c, atoms, consts, done, left - 1, b, f);
        for v in bound.drain(..) {
            b[v] = None;
        }
        if !cont {
            done[i] = false;
            return false;
        }
    }
    done[i] = false;
    true
}

/// Equalities and pins as an initial partial assignment; `None` if contradictory.
pub(crate) fn initial(c: &Structure, q: &ConjunctiveQuery, pin: &[(Var, Elem)]) -> Option<Vec<Option<Elem>>> {
    let mut b = vec![None; q.vars.len()];
    let set = |v: Var, e: Elem, b: &mut Vec<Option<Elem>>| match b[v as usize] {
        Some(x) => x == e,
        None => {
            b[v as usize] = Some(e);
            true
        }
    };
    for &(v, e) in pin {
        if e.ix() >= c.num_elems() || !set(v, e, &mut b) {
            return None;
        }
    }
    for &(v, k) in &q.eqs {
        let e = c.elem_of(k)?;
        if !set(v, e, &mut b) {
            return None;
        }
    }
    Some(b)
}

/// All total assignments extending `pin` that satisfy `q` in `c`.
pub fn eval(c: &Structure, q: &ConjunctiveQuery, pin: &[(Var, Elem)]) -> Vec<Vec<Elem>> {
    let Some(mut b) = initial(c, q, pin) else {
        return Vec::new();
    };
    let mut partial: Vec<Vec<Option<Elem>>> = Vec::new();
    search(c, &q.atoms, &mut b, &mut |m| {
        partial.push(m.to_vec());
        true
    });
    let n = c.num_elems() as u32;
    let mut out = Vec::new();
    for p in partial {
        let free: Vec<usize> = (0..p.len()).filter(|&i| p[i].is_none()).collect();
        if free.is_empty() {
            out.push(p.into_iter().map(Option::unwrap).collect());
            continue;
        }
        if n == 0 {
            continue;
        }
        let mut cur: Vec<Elem> = p.iter().map(|e| e.unwrap_or(Elem(0))).collect();
        loop {
            out.push(cur.clone());
            let mut k = 0;
            loop {
                if k == free.len() {
                    break;
                }
                let v = free[k];
                if cur[v].0 + 1 < n {
                    cur[v] = Elem(cur[v].0 + 1);
                    break;
                }
                cur[v] = Elem(0);
                k += 1;
            }
            if k == free.len() {
                break;
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Whether some assignment extending `pin` satisfies `q`.
pub fn holds_at(c: &Structure, q: &ConjunctiveQuery, pin: &[(Var, Elem)]) -> bool {
    let Some(mut b) = initial(c, q, pin) else {
        return false;
    };
    let mut found = false;
    search(c, &q.atoms, &mut b, &mut |_| {
        found = true;
        false
    });
    found && (c.num_elems() > 0 || q.used_vars().is_empty())
}

pub fn holds(c: &Structure, q: &ConjunctiveQuery) -> bool {
    holds_at(c, q, &[])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn sig() -> (Arc<Signature>, Pred) {
        let mut s = Signature::new();
        let e = s.add_pred("E", 2).unwrap();
        s.add_const("c");
        (Arc::new(s), e)
    }

    fn cycle(sig: &Arc<Signature>, e: Pred, n: usize) -> Structure {
        let mut s = Structure::new(sig.clone());
        let xs: Vec<Elem> = (0..n).map(|i| s.add_elem(format!("a{i}"))).collect();
        for i in 0..n {
            s.add(e, &[xs[i], xs[(i + 1) % n]]);
        }
        s
    }

    fn triangle_q(e: Pred) -> ConjunctiveQuery {
        let mut q = ConjunctiveQuery::new();
        let (x, y, z) = (q.var("X"), q.var("Y"), q.var("Z"));
        q.atom(e, [Term::Var(x), Term::Var(y)])
            .atom(e, [Term::Var(y), Term::Var(z)])
            .atom(e, [Term::Var(z), Term::Var(x)]);
        q
    }

    #[test]
    fn triangle_query() {
        let (sig, e) = sig();
        let t = cycle(&sig, e, 3);
        assert_eq!(eval(&t, &triangle_q(e), &[]).len(), 3);
        let mut chain = Structure::new(sig.clone());
        let xs: Vec<Elem> = (0..50).map(|i| chain.add_elem(format!("a{i}"))).collect();
        for w in xs.windows(2) {
            chain.add(e, w);
        }
        assert!(eval(&chain, &triangle_q(e), &[]).is_empty());
        assert!(!holds(&chain, &triangle_q(e)));
    }

    #[test]
    fn equality_pins() {
        let (sig, _) = sig();
        let c = sig.constant("c").unwrap();
        let s = Structure::with_constants(sig.clone());
        let mut q = ConjunctiveQuery::new();
        let y = q.var("Y");
        q.eqs.push((y, c));
        let ce = s.elem_of(c).unwrap();
        assert_eq!(eval(&s, &q, &[(y, ce)]), vec![vec![ce]]);
    }

    #[test]
    fn free_variables_range_over_domain() {
        let (sig, e) = sig();
        let s = cycle(&sig, e, 2);
        let mut q = ConjunctiveQuery::new();
        q.var("X");
        assert_eq!(eval(&s, &q, &[]).len(), 2);
    }

    #[test]
    fn iso_key_ignores_names() {
        let (_, e) = sig();
        let mut a = ConjunctiveQuery::new();
        let (x, y) = (a.var("X"), a.var("Y"));
        a.atom(e, [Term::Var(x), Term::Var(y)]);
        let mut b = ConjunctiveQuery::new();
        let (u, w) = (b.var("W"), b.var("U"));
        b.atom(e, [Term::Var(w), Term::Var(u)]);
        assert_eq!(a.iso_key(), b.iso_key());
        let mut c = ConjunctiveQuery::new();
        let x = c.var("X");
        c.atom(e, [Term::Var(x), Term::Var(x)]);
        assert_ne!(a.iso_key(), c.iso_key());
    }
}
