use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a predicate inside its [`Signature`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pred(pub u32);

/// Index of a constant inside its [`Signature`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Const(pub u32);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredInfo {
    pub name: String,
    pub arity: usize,
    /// Heads an existential rule and no datalog rule.
    pub tgp: bool,
    /// `(hue, lightness)` for color markers.
    pub color: Option<(u32, u32)>,
}

/// Predicates and constants. Signatures only ever grow: a derived signature
/// keeps every id of the one it was cloned from, so structures over the
/// smaller one remain valid over the larger.
#[derive(Clone, Debug, Default)]
pub struct Signature {
    preds: Vec<PredInfo>,
    pred_ix: HashMap<String, Pred>,
    consts: Vec<String>,
    const_ix: HashMap<String, Const>,
}

impl PartialEq for Signature {
    fn eq(&self, other: &Self) -> bool {
        self.preds == other.preds && self.consts == other.consts
    }
}

impl Eq for Signature {}

impl Signature {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares `name/arity`, or returns the existing predicate if the arity agrees.
    pub fn add_pred(&mut self, name: &str, arity: usize) -> Result<Pred> {
        if let Some(&p) = self.pred_ix.get(name) {
            let expected = self.preds[p.0 as usize].arity;
            if expected != arity {
                return Err(Error::Arity {
                    name: name.to_string(),
                    expected,
                    found: arity,
                });
            }
            return Ok(p);
        }
        let p = Pred(self.preds.len() as u32);
        self.preds.push(PredInfo {
            name: name.to_string(),
            arity,
            tgp: false,
            color: None,
        });
        self.pred_ix.insert(name.to_string(), p);
        Ok(p)
    }

    /// Declares a predicate whose name is `base` or, if taken, `base_2`, `base_3`, ...
    pub fn fresh_pred(&mut self, base: &str, arity: usize) -> Pred {
        let mut name = base.to_string();
        let mut k = 2;
        while self.pred_ix.contains_key(&name) {
            name = format!("{base}_{k}");
            k += 1;
        }
        self.add_pred(&name, arity).expect("fresh name")
    }

    /// The color marker `K_h_l`, created on first use.
    pub fn color(&mut self, hue: u32, lightness: u32) -> Pred {
        let name = format!("K_{hue}_{lightness}");
        if let Some(&p) = self.pred_ix.get(&name) {
            return p;
        }
        let p = self.add_pred(&name, 1).expect("unary color");
        self.preds[p.0 as usize].color = Some((hue, lightness));
        p
    }

    pub fn pred(&self, name: &str) -> Option<Pred> {
        self.pred_ix.get(name).copied()
    }

    pub fn info(&self, p: Pred) -> &PredInfo {
        &self.preds[p.0 as usize]
    }

    pub fn name(&self, p: Pred) -> &str {
        &self.preds[p.0 as usize].name
    }

    pub fn arity(&self, p: Pred) -> usize {
        self.preds[p.0 as usize].arity
    }

    pub fn is_tgp(&self, p: Pred) -> bool {
        self.preds[p.0 as usize].tgp
    }

    pub fn is_color(&self, p: Pred) -> bool {
        self.preds[p.0 as usize].color.is_some()
    }

    pub fn set_tgp(&mut self, p: Pred, tgp: bool) {
        self.preds[p.0 as usize].tgp = tgp;
    }

    pub fn num_preds(&self) -> usize {
        self.preds.len()
    }

    pub fn preds(&self) -> impl Iterator<Item = Pred> + '_ {
        (0..self.preds.len() as u32).map(Pred)
    }

    /// Relational symbols that are not color markers.
    pub fn base_preds(&self) -> Vec<Pred> {
        self.preds().filter(|&p| !self.is_color(p)).collect()
    }

    pub fn add_const(&mut self, name: &str) -> Const {
        if let Some(&c) = self.const_ix.get(name) {
            return c;
        }
        let c = Const(self.consts.len() as u32);
        self.consts.push(name.to_string());
        self.const_ix.insert(name.to_string(), c);
        c
    }

    pub fn constant(&self, name: &str) -> Option<Const> {
        self.const_ix.get(name).copied()
    }

    pub fn const_name(&self, c: Const) -> &str {
        &self.consts[c.0 as usize]
    }

    pub fn num_consts(&self) -> usize {
        self.consts.len()
    }

    pub fn consts(&self) -> impl Iterator<Item = Const> + '_ {
        (0..self.consts.len() as u32).map(Const)
    }

    /// True when every predicate and constant of `other` has the same id here.
    pub fn extends(&self, other: &Signature) -> bool {
        other.preds.len() <= self.preds.len()
            && other.consts.len() <= self.consts.len()
            && other
                .preds
                .iter()
                .zip(&self.preds)
                .all(|(a, b)| a.name == b.name && a.arity == b.arity)
            && other.consts.iter().zip(&self.consts).all(|(a, b)| a == b)
    }

    /// Predicates of arity above two.
    pub fn wide_preds(&self) -> Vec<Pred> {
        self.preds().filter(|&p| self.arity(p) > 2).collect()
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preds: Vec<String> = self
            .preds
            .iter()
            .map(|p| format!("{}/{}", p.name, p.arity))
            .collect();
        write!(f, "{{{}}}", preds.join(", "))?;
        if !self.consts.is_empty() {
            write!(f, " consts {{{}}}", self.consts.join(", "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arity_is_checked() {
        let mut s = Signature::new();
        let e = s.add_pred("E", 2).unwrap();
        assert_eq!(s.add_pred("E", 2).unwrap(), e);
        assert!(matches!(s.add_pred("E", 3), Err(Error::Arity { .. })));
    }

    #[test]
    fn colors_are_unary_and_shared() {
        let mut s = Signature::new();
        let k = s.color(1, 0);
        assert_eq!(s.name(k), "K_1_0");
        assert_eq!(s.arity(k), 1);
        assert_eq!(s.color(1, 0), k);
        assert!(s.is_color(k));
    }

    #[test]
    fn extension_keeps_ids() {
        let mut s = Signature::new();
        s.add_pred("E", 2).unwrap();
        s.add_const("a");
        let mut t = s.clone();
        t.add_pred("R", 2).unwrap();
        assert!(t.extends(&s));
        assert!(!s.extends(&t));
        let p = t.fresh_pred("R", 2);
        assert_eq!(t.name(p), "R_2");
    }
}
