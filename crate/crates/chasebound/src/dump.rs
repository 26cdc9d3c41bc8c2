//! Line-oriented dumps of chase traces, quotients and colorings.
//!
//! Each dump starts with a `chasebound <kind> <version>` header. Atoms are
//! written as facts in program syntax so that any section can be pasted
//! into the `data:` part of a program.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::chase::{ChaseTrace, Stop};
use crate::coloring::Coloring;
use crate::error::{Error, Result};
use crate::program::parse_program;
use crate::structure::{Elem, Structure};
use crate::types::QuotientMap;

pub const DUMP_VERSION: u32 = 1;

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::Syntax {
        line: line + 1,
        col: 1,
        msg: msg.into(),
    }
}

/// Splits off the header and checks kind and version.
fn header<'a>(text: &'a str, kind: &str) -> Result<(Vec<&'a str>, std::iter::Enumerate<std::str::Lines<'a>>)> {
    let mut lines = text.lines().enumerate();
    let (_, h) = lines.next().ok_or_else(|| bad(0, "empty dump"))?;
    let w: Vec<&str> = h.split_whitespace().collect();
    match w.as_slice() {
        ["chasebound", k, v, rest @ ..] if *k == kind => {
            let v: u32 = v.parse().map_err(|_| bad(0, "bad version"))?;
            if v != DUMP_VERSION {
                return Err(Error::input(format!("{kind} dump version {v}, this build reads {DUMP_VERSION}")));
            }
            Ok((rest.to_vec(), lines))
        }
        _ => Err(bad(0, format!("not a chasebound {kind} dump"))),
    }
}

fn check_fact(i: usize, line: &str) -> Result<String> {
    let l = line.trim();
    if !l.ends_with('.') || !l.contains('(') {
        return Err(bad(i, format!("expected a fact, got `{l}`")));
    }
    parse_program(&format!("data:\n{l}\n")).map_err(|e| bad(i, e.to_string()))?;
    Ok(l.to_string())
}

fn facts_of(atoms: impl Iterator<Item = String>) -> Vec<String> {
    let mut v: Vec<String> = atoms.map(|a| format!("{a}.")).collect();
    v.sort();
    v
}

/// A null and the trigger that created it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NullLine {
    pub name: String,
    pub round: usize,
    /// Zero-based rule index.
    pub rule: usize,
    pub frontier: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceDump {
    /// `fixpoint`, `depth` or `elements`.
    pub stop: String,
    /// New facts of each round; round 0 is the input.
    pub rounds: Vec<Vec<String>>,
    pub nulls: Vec<NullLine>,
}

impl TraceDump {
    pub fn new(tr: &ChaseTrace) -> TraceDump {
        let s = &tr.result;
        let stop = match tr.stop {
            Stop::Fixpoint => "fixpoint",
            Stop::Depth => "depth",
            Stop::Elements => "elements",
        };
        let rounds = tr.added.iter().map(|r| facts_of(r.iter().map(|a| s.show_atom(a)))).collect();
        let nulls = tr
            .provenance
            .iter()
            .map(|(&e, o)| NullLine {
                name: s.name(e).to_string(),
                round: tr.depth(e),
                rule: o.rule,
                frontier: o.frontier.iter().map(|&x| s.name(x).to_string()).collect(),
            })
            .collect();
        TraceDump {
            stop: stop.into(),
            rounds,
            nulls,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "chasebound trace {DUMP_VERSION} rounds {} stop {}", self.rounds.len() - 1, self.stop);
        for (i, r) in self.rounds.iter().enumerate() {
            let _ = writeln!(s, "round {i}");
            for n in self.nulls.iter().filter(|n| n.round == i) {
                let _ = writeln!(s, "null {} rule {} frontier {}", n.name, n.rule + 1, n.frontier.join(","));
            }
            for f in r {
                let _ = writeln!(s, "{f}");
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<TraceDump> {
        let (head, lines) = header(text, "trace")?;
        let (rounds, stop) = match head.as_slice() {
            ["rounds", k, "stop", st] if ["fixpoint", "depth", "elements"].contains(st) => {
                (k.parse::<usize>().map_err(|_| bad(0, "bad round count"))?, st.to_string())
            }
            _ => return Err(bad(0, "expected `rounds <k> stop <reason>`")),
        };
        let mut out = TraceDump {
            stop,
            rounds: Vec::new(),
            nulls: Vec::new(),
        };
        for (i, line) in lines {
            let w: Vec<&str> = line.split_whitespace().collect();
            match w.as_slice() {
                [] => {}
                ["round", k] => {
                    if k.parse::<usize>().ok() != Some(out.rounds.len()) {
                        return Err(bad(i, "rounds out of order"));
                    }
                    out.rounds.push(Vec::new());
                }
                ["null", name, "rule", r, "frontier", rest @ ..] if !out.rounds.is_empty() => {
                    let r: usize = r.parse().map_err(|_| bad(i, "bad rule number"))?;
                    out.nulls.push(NullLine {
                        name: name.to_string(),
                        round: out.rounds.len() - 1,
                        rule: r.checked_sub(1).ok_or_else(|| bad(i, "rules count from 1"))?,
                        frontier: rest.iter().flat_map(|x| x.split(',')).filter(|x| !x.is_empty()).map(String::from).collect(),
                    });
                }
                _ => match out.rounds.last_mut() {
                    Some(r) => r.push(check_fact(i, line)?),
                    None => return Err(bad(i, "fact before the first round")),
                },
            }
        }
        if out.rounds.len() != rounds + 1 {
            return Err(bad(0, format!("header promises {rounds} rounds, found {}", out.rounds.len().saturating_sub(1))));
        }
        Ok(out)
    }

    /// All facts up to and including round `k`, as a program data section.
    pub fn facts_until(&self, k: usize) -> String {
        let mut v: Vec<&String> = self.rounds[..=k.min(self.rounds.len() - 1)].iter().flatten().collect();
        v.sort();
        v.into_iter().map(|f| format!("{f}\n")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassLine {
    pub class: String,
    pub representative: String,
    /// Color atom name of the representative, if it has one.
    pub color: Option<String>,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuotientDump {
    pub n: usize,
    pub classes: Vec<ClassLine>,
    pub facts: Vec<String>,
}

impl QuotientDump {
    /// `source` is the structure that was quotiented, colors included.
    pub fn new(source: &Structure, q: &QuotientMap) -> QuotientDump {
        let sig = source.sig();
        let color_of = |e: Elem| {
            source
                .atoms()
                .find(|a| a.args.len() == 1 && a.args[0] == e && sig.is_color(a.pred))
                .map(|a| sig.name(a.pred).to_string())
        };
        let classes = q
            .members()
            .into_iter()
            .enumerate()
            .map(|(i, m)| ClassLine {
                class: q.quotient.name(Elem(i as u32)).to_string(),
                representative: m.first().map_or("-".into(), |&e| source.name(e).to_string()),
                color: m.first().and_then(|&e| color_of(e)),
                size: m.len(),
            })
            .collect();
        let m = &q.quotient;
        QuotientDump {
            n: q.n,
            classes,
            facts: facts_of(m.atoms().filter(|a| !m.sig().is_color(a.pred)).map(|a| m.show_atom(a))),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "chasebound quotient {DUMP_VERSION} n {} classes {}", self.n, self.classes.len());
        for c in &self.classes {
            let color = c.color.as_deref().unwrap_or("-");
            let _ = writeln!(s, "class {} rep {} color {color} size {}", c.class, c.representative, c.size);
        }
        for f in &self.facts {
            let _ = writeln!(s, "{f}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<QuotientDump> {
        let (head, lines) = header(text, "quotient")?;
        let (n, k) = match head.as_slice() {
            ["n", n, "classes", k] => (
                n.parse().map_err(|_| bad(0, "bad n"))?,
                k.parse::<usize>().map_err(|_| bad(0, "bad class count"))?,
            ),
            _ => return Err(bad(0, "expected `n <n> classes <k>`")),
        };
        let mut out = QuotientDump {
            n,
            classes: Vec::new(),
            facts: Vec::new(),
        };
        for (i, line) in lines {
            let w: Vec<&str> = line.split_whitespace().collect();
            match w.as_slice() {
                [] => {}
                ["class", c, "rep", r, "color", col, "size", sz] => out.classes.push(ClassLine {
                    class: c.to_string(),
                    representative: r.to_string(),
                    color: (*col != "-").then(|| col.to_string()),
                    size: sz.parse().map_err(|_| bad(i, "bad size"))?,
                }),
                _ => out.facts.push(check_fact(i, line)?),
            }
        }
        if out.classes.len() != k {
            return Err(bad(0, format!("header promises {k} classes, found {}", out.classes.len())));
        }
        Ok(out)
    }
}

/// One `K_h_l(e).` fact per element.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColoringDump {
    pub colors: Vec<(String, u32, u32)>,
}

impl ColoringDump {
    pub fn new(c: &Coloring) -> ColoringDump {
        let b = c.base();
        ColoringDump {
            colors: b.elems().map(|e| (b.name(e).to_string(), c.hue(e), c.lightness(e))).collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "chasebound coloring {DUMP_VERSION} elements {}", self.colors.len());
        for (e, h, l) in &self.colors {
            let _ = writeln!(s, "K_{h}_{l}({e}).");
        }
        s
    }

    pub fn parse(text: &str) -> Result<ColoringDump> {
        let (head, lines) = header(text, "coloring")?;
        let k: usize = match head.as_slice() {
            ["elements", k] => k.parse().map_err(|_| bad(0, "bad element count"))?,
            _ => return Err(bad(0, "expected `elements <k>`")),
        };
        let mut colors = Vec::new();
        for (i, line) in lines {
            let l = line.trim();
            if l.is_empty() {
                continue;
            }
            let parsed = (|| {
                let (pred, rest) = l.strip_suffix(").")?.split_once('(')?;
                let (h, li) = pred.strip_prefix("K_")?.split_once('_')?;
                Some((rest.to_string(), h.parse().ok()?, li.parse().ok()?))
            })();
            colors.push(parsed.ok_or_else(|| bad(i, format!("expected a K_h_l fact, got `{l}`")))?);
        }
        if colors.len() != k {
            return Err(bad(0, format!("header promises {k} elements, found {}", colors.len())));
        }
        Ok(ColoringDump { colors })
    }
}
