use std::collections::HashMap;
use std::sync::Arc;

use crate::canon::{canonical_code, CanonInput};
use crate::error::{Error, Result};
use crate::hom::Compiled;
use crate::signature::{Const, Pred, Signature};
use crate::structure::{Elem, Structure};

use super::Pattern;

pub const DEFAULT_MAX_CATALOG: usize = 1 << 20;

/// Every connected pointed pattern with at most `m` elements over `preds`,
/// one per isomorphism class.
#[derive(Clone, Debug)]
pub struct PatternCatalog {
    pub m: usize,
    pub preds: Vec<Pred>,
    pub patterns: Vec<Pattern>,
    keys: HashMap<Vec<u64>, usize>,
}

fn code(s: &Structure, point: Elem) -> Vec<u64> {
    let colors = s
        .elems()
        .map(|e| match s.const_of(e) {
            Some(k) => 2 + 2 * k.0 as u64 + u64::from(e == point),
            None => u64::from(e == point),
        })
        .collect();
    let edges = s
        .atoms()
        .map(|a| (a.pred.0 as u64, a.args.iter().map(|e| e.ix()).collect()))
        .collect();
    canonical_code(&CanonInput { colors, edges })
}

fn connected(s: &Structure) -> bool {
    let n = s.num_elems();
    let ix = s.index();
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for u in ix.neighbours(Elem(v as u32)) {
            if !seen[u.ix()] {
                seen[u.ix()] = true;
                count += 1;
                stack.push(u.ix());
            }
        }
    }
    count == n
}

fn tuples(k: usize, arity: usize) -> Vec<Vec<Elem>> {
    let mut out = vec![Vec::new()];
    for _ in 0..arity {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..k as u32).map(move |i| {
                    let mut t = t.clone();
                    t.push(Elem(i));
                    t
                })
            })
            .collect();
    }
    out
}

/// Enumerates the catalog; fails once more than `cap` subsets would have to
/// be examined or more than `cap` patterns found.
pub fn build_catalog(sig: &Arc<Signature>, preds: &[Pred], m: usize, cap: usize) -> Result<PatternCatalog> {
    if m == 0 {
        return Err(Error::input("catalog bound must be at least 1"));
    }
    let mut cat = PatternCatalog {
        m,
        preds: preds.to_vec(),
        patterns: Vec::new(),
        keys: HashMap::new(),
    };
    for k in 1..=m {
        let slots: Vec<(Pred, Vec<Elem>)> = preds
            .iter()
            .flat_map(|&p| tuples(k, sig.arity(p)).into_iter().map(move |t| (p, t)))
            .collect();
        if slots.len() >= 63 || (1u64 << slots.len()) > cap as u64 * 64 {
            return Err(Error::Resource(format!(
                "pattern catalog for {} predicates at size {m} is too large; use a smaller m",
                preds.len()
            )));
        }
        for mask in 0u64..1 << slots.len() {
            let mut s = Structure::new(sig.clone());
            for i in 0..k {
                s.add_elem(if i == 0 { "Y".to_string() } else { format!("X{i}") });
            }
            for (i, (p, t)) in slots.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    s.add(*p, t);
                }
            }
            if !connected(&s) {
                continue;
            }
            for point in 0..k as u32 {
                let key = code(&s, Elem(point));
                if cat.keys.contains_key(&key) {
                    continue;
                }
                cat.keys.insert(key, cat.patterns.len());
                cat.patterns.push(Pattern {
                    structure: s.clone(),
                    point: Elem(point),
                });
                if cat.patterns.len() > cap {
                    return Err(Error::Resource(format!(
                        "pattern catalog exceeds {cap} entries; use a smaller m"
                    )));
                }
            }
        }
    }
    Ok(cat)
}

impl PatternCatalog {
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// The entry isomorphic to `(s, point)`.
    pub fn find(&self, s: &Structure, point: Elem) -> Option<usize> {
        self.keys.get(&code(s, point)).copied()
    }
}

/// Which catalog patterns hold at an element, plus the constant it names.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    pub bits: Vec<u64>,
    pub constant: Option<Const>,
}

impl Fingerprint {
    pub fn has(&self, i: usize) -> bool {
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    /// Pattern ids on which the two fingerprints differ.
    pub fn diff(&self, other: &Fingerprint) -> Vec<usize> {
        (0..self.bits.len() * 64)
            .filter(|&i| {
                let (a, b) = (self.bits[i / 64] >> (i % 64) & 1, other.bits[i / 64] >> (i % 64) & 1);
                a != b
            })
            .collect()
    }

    pub fn subset_of(&self, other: &Fingerprint) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| a & !b == 0)
    }
}

pub fn fingerprint(c: &Structure, e: Elem, cat: &PatternCatalog) -> Fingerprint {
    let mut bits = vec![0u64; cat.len().div_ceil(64)];
    for (i, p) in cat.patterns.iter().enumerate() {
        if Compiled::new(&p.structure, p.point).maps_to(c, e) {
            bits[i / 64] |= 1 << (i % 64);
        }
    }
    Fingerprint {
        bits,
        constant: c.const_of(e),
    }
}
