use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::signature::{Const, Pred, Signature};

/// Dense element id, stable for the lifetime of a structure and its extensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Elem(pub u32);

impl Elem {
    pub fn ix(self) -> usize {
        self.0 as usize
    }
}

pub type Tuple = SmallVec<[Elem; 3]>;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub pred: Pred,
    pub args: Tuple,
}

impl Atom {
    pub fn new(pred: Pred, args: impl IntoIterator<Item = Elem>) -> Self {
        Atom {
            pred,
            args: args.into_iter().collect(),
        }
    }
}

/// Lookup tables built on first use.
#[derive(Debug, Default)]
pub struct Index {
    pub atoms: Vec<Atom>,
    pub set: HashSet<Atom>,
    pub by_pred: Vec<Vec<u32>>,
    pub by_pos: HashMap<(Pred, u8, Elem), Vec<u32>>,
    pub incident: Vec<Vec<u32>>,
}

impl Index {
    pub fn with_pred(&self, p: Pred) -> &[u32] {
        self.by_pred.get(p.0 as usize).map_or(&[], |v| v.as_slice())
    }

    pub fn at(&self, p: Pred, pos: usize, e: Elem) -> &[u32] {
        self.by_pos
            .get(&(p, pos as u8, e))
            .map_or(&[], |v| v.as_slice())
    }

    /// Gaifman neighbours of `e`, excluding `e`.
    pub fn neighbours(&self, e: Elem) -> Vec<Elem> {
        let mut out: Vec<Elem> = self.incident[e.ix()]
            .iter()
            .flat_map(|&i| self.atoms[i as usize].args.iter().copied())
            .filter(|&x| x != e)
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

/// A finite relational structure over a shared signature.
pub struct Structure {
    sig: Arc<Signature>,
    names: Vec<String>,
    constant: Vec<Option<Const>>,
    interp: HashMap<Const, Elem>,
    atoms: BTreeSet<Atom>,
    index: OnceLock<Index>,
}

impl Clone for Structure {
    fn clone(&self) -> Self {
        Structure {
            sig: self.sig.clone(),
            names: self.names.clone(),
            constant: self.constant.clone(),
            interp: self.interp.clone(),
            atoms: self.atoms.clone(),
            index: OnceLock::new(),
        }
    }
}

impl PartialEq for Structure {
    fn eq(&self, other: &Self) -> bool {
        self.names.len() == other.names.len()
            && self.constant == other.constant
            && self.atoms == other.atoms
    }
}

impl Eq for Structure {}

impl fmt::Debug for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Structure[{} elems] {{", self.names.len())?;
        let atoms: Vec<String> = self.atoms.iter().map(|a| self.show_atom(a)).collect();
        write!(f, "{}}}", atoms.join(", "))
    }
}

impl Structure {
    pub fn new(sig: Arc<Signature>) -> Self {
        Structure {
            sig,
            names: Vec::new(),
            constant: Vec::new(),
            interp: HashMap::new(),
            atoms: BTreeSet::new(),
            index: OnceLock::new(),
        }
    }

    /// A structure interpreting every constant of `sig` by its own element.
    pub fn with_constants(sig: Arc<Signature>) -> Self {
        let mut s = Structure::new(sig.clone());
        for c in sig.consts() {
            s.const_elem(c);
        }
        s
    }

    pub fn sig(&self) -> &Signature {
        &self.sig
    }

    pub fn sig_arc(&self) -> &Arc<Signature> {
        &self.sig
    }

    /// Moves the structure to a signature extending the current one.
    pub fn upgrade(mut self, sig: Arc<Signature>) -> Result<Self> {
        if !sig.extends(&self.sig) {
            return Err(Error::input("signature does not extend the structure's"));
        }
        self.sig = sig;
        Ok(self)
    }

    /// Copies the structure into an unrelated signature, matching
    /// predicates and constants by name.
    pub fn rebase(&self, sig: Arc<Signature>) -> Result<Self> {
        let mut out = Structure::new(sig.clone());
        let mut map = Vec::with_capacity(self.num_elems());
        for e in self.elems() {
            let m = match self.const_of(e) {
                Some(c) => {
                    let name = self.sig.const_name(c);
                    let c2 = sig
                        .constant(name)
                        .ok_or_else(|| Error::input(format!("constant {name} is not in the target signature")))?;
                    out.const_elem(c2)
                }
                None => out.add_elem(self.name(e).to_string()),
            };
            map.push(m);
        }
        for a in &self.atoms {
            let name = self.sig.name(a.pred);
            let p = sig
                .pred(name)
                .filter(|&p| sig.arity(p) == a.args.len())
                .ok_or_else(|| Error::input(format!("{name}/{} is not in the target signature", a.args.len())))?;
            let args: Vec<Elem> = a.args.iter().map(|x| map[x.ix()]).collect();
            out.add(p, &args);
        }
        Ok(out)
    }

    fn touch(&mut self) {
        self.index.take();
    }

    pub fn add_elem(&mut self, name: impl Into<String>) -> Elem {
        let e = Elem(self.names.len() as u32);
        self.names.push(name.into());
        self.constant.push(None);
        self.touch();
        e
    }

    /// The element interpreting `c`, created if absent.
    pub fn const_elem(&mut self, c: Const) -> Elem {
        if let Some(&e) = self.interp.get(&c) {
            return e;
        }
        let e = self.add_elem(self.sig.const_name(c).to_string());
        self.constant[e.ix()] = Some(c);
        self.interp.insert(c, e);
        e
    }

    /// Turns an existing element into the interpretation of `c`.
    pub fn bind_const(&mut self, c: Const, e: Elem) -> Result<()> {
        if let Some(&old) = self.interp.get(&c) {
            if old != e {
                return Err(Error::input("constant already interpreted"));
            }
            return Ok(());
        }
        if self.constant[e.ix()].is_some() {
            return Err(Error::input("element already interprets a constant"));
        }
        self.constant[e.ix()] = Some(c);
        self.interp.insert(c, e);
        self.names[e.ix()] = self.sig.const_name(c).to_string();
        self.touch();
        Ok(())
    }

    pub fn elem_of(&self, c: Const) -> Option<Elem> {
        self.interp.get(&c).copied()
    }

    pub fn const_of(&self, e: Elem) -> Option<Const> {
        self.constant[e.ix()]
    }

    pub fn is_const(&self, e: Elem) -> bool {
        self.constant[e.ix()].is_some()
    }

    pub fn name(&self, e: Elem) -> &str {
        &self.names[e.ix()]
    }

    pub fn set_name(&mut self, e: Elem, name: impl Into<String>) {
        self.names[e.ix()] = name.into();
    }

    pub fn elem_by_name(&self, name: &str) -> Option<Elem> {
        self.names.iter().position(|n| n == name).map(|i| Elem(i as u32))
    }

    pub fn num_elems(&self) -> usize {
        self.names.len()
    }

    pub fn elems(&self) -> impl Iterator<Item = Elem> {
        (0..self.names.len() as u32).map(Elem)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.atoms.iter()
    }

    pub fn contains(&self, a: &Atom) -> bool {
        self.atoms.contains(a)
    }

    pub fn has(&self, p: Pred, args: &[Elem]) -> bool {
        self.atoms.contains(&Atom::new(p, args.iter().copied()))
    }

    /// Inserts an atom after checking arity and element ids; returns whether it was new.
    pub fn add_atom(&mut self, atom: Atom) -> Result<bool> {
        let arity = self.sig.arity(atom.pred);
        if atom.args.len() != arity {
            return Err(Error::Arity {
                name: self.sig.name(atom.pred).to_string(),
                expected: arity,
                found: atom.args.len(),
            });
        }
        if atom.args.iter().any(|e| e.ix() >= self.names.len()) {
            return Err(Error::input("atom mentions an unknown element"));
        }
        Ok(self.insert(atom))
    }

    pub(crate) fn insert(&mut self, atom: Atom) -> bool {
        debug_assert_eq!(atom.args.len(), self.sig.arity(atom.pred));
        let fresh = self.atoms.insert(atom);
        if fresh {
            self.touch();
        }
        fresh
    }

    pub fn add(&mut self, p: Pred, args: &[Elem]) -> bool {
        self.insert(Atom::new(p, args.iter().copied()))
    }

    pub fn index(&self) -> &Index {
        self.index.get_or_init(|| {
            let atoms: Vec<Atom> = self.atoms.iter().cloned().collect();
            let mut by_pred = vec![Vec::new(); self.sig.num_preds()];
            let mut by_pos: HashMap<(Pred, u8, Elem), Vec<u32>> = HashMap::new();
            let mut incident = vec![Vec::new(); self.names.len()];
            for (i, a) in atoms.iter().enumerate() {
                let i = i as u32;
                by_pred[a.pred.0 as usize].push(i);
                for (pos, &e) in a.args.iter().enumerate() {
                    by_pos.entry((a.pred, pos as u8, e)).or_default().push(i);
                    let inc: &mut Vec<u32> = &mut incident[e.ix()];
                    if inc.last() != Some(&i) {
                        inc.push(i);
                    }
                }
            }
            let set = atoms.iter().cloned().collect();
            Index {
                atoms,
                set,
                by_pred,
                by_pos,
                incident,
            }
        })
    }

    /// Atoms lying inside `keep`; the result's elements are exactly `keep`,
    /// renumbered in the given order. Also returns new → old ids.
    pub fn restrict_elems_map(&self, keep: &[Elem]) -> Result<(Structure, Vec<Elem>)> {
        let mut map = vec![None; self.names.len()];
        let mut out = Structure::new(self.sig.clone());
        for &e in keep {
            if e.ix() >= self.names.len() {
                return Err(Error::input(format!("unknown element {}", e.0)));
            }
            if map[e.ix()].is_some() {
                continue;
            }
            let ne = out.add_elem(self.names[e.ix()].clone());
            if let Some(c) = self.constant[e.ix()] {
                out.constant[ne.ix()] = Some(c);
                out.interp.insert(c, ne);
            }
            map[e.ix()] = Some(ne);
        }
        for a in &self.atoms {
            let args: Option<Tuple> = a.args.iter().map(|e| map[e.ix()]).collect();
            if let Some(args) = args {
                out.atoms.insert(Atom { pred: a.pred, args });
            }
        }
        let back = {
            let mut b = vec![Elem(0); out.num_elems()];
            for (old, new) in map.iter().enumerate() {
                if let Some(n) = new {
                    b[n.ix()] = Elem(old as u32);
                }
            }
            b
        };
        Ok((out, back))
    }

    pub fn restrict_elems(&self, keep: &[Elem]) -> Result<Structure> {
        Ok(self.restrict_elems_map(keep)?.0)
    }

    /// Atoms whose predicate is in `preds`; elements unchanged.
    pub fn restrict_preds(&self, preds: &[Pred]) -> Result<Structure> {
        let n = self.sig.num_preds();
        let mut keep = vec![false; n];
        for p in preds {
            if p.0 as usize >= n {
                return Err(Error::input(format!("unknown predicate id {}", p.0)));
            }
            keep[p.0 as usize] = true;
        }
        Ok(self.filter_atoms(|a| keep[a.pred.0 as usize]))
    }

    pub fn filter_atoms(&self, mut f: impl FnMut(&Atom) -> bool) -> Structure {
        let mut out = self.clone();
        out.atoms.retain(|a| f(a));
        out.touch();
        out
    }

    /// Drops color markers.
    pub fn uncolored(&self) -> Structure {
        let sig = self.sig.clone();
        self.filter_atoms(|a| !sig.is_color(a.pred))
    }

    pub fn show_atom(&self, a: &Atom) -> String {
        let args: Vec<&str> = a.args.iter().map(|e| self.name(*e)).collect();
        format!("{}({})", self.sig.name(a.pred), args.join(","))
    }

    /// Facts in program syntax, one per line, sorted.
    pub fn to_facts(&self) -> String {
        let mut lines: Vec<String> = self
            .atoms
            .iter()
            .map(|a| format!("{}.", self.show_atom(a)))
            .collect();
        lines.sort();
        let mut out = lines.join("\n");
        if !out.is_empty() {
            out.push('\n');
        }
        out
    }

    pub fn count_pred(&self, p: Pred) -> usize {
        self.index().with_pred(p).len()
    }

    /// Directed successors of `e` along binary atoms.
    pub fn successors(&self, e: Elem) -> Vec<Elem> {
        let ix = self.index();
        let mut out: Vec<Elem> = ix.incident[e.ix()]
            .iter()
            .map(|&i| &ix.atoms[i as usize])
            .filter(|a| a.args.len() == 2 && a.args[0] == e)
            .map(|a| a.args[1])
            .collect();
        out.sort();
        out.dedup();
        out
    }
}
