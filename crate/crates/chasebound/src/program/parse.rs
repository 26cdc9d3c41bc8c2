use std::collections::HashMap;
use std::sync::Arc;

use super::{Program, Rule, Theory};
use crate::error::{Error, Result};
use crate::query::{ConjunctiveQuery, QAtom, Term, UnionQuery};
use crate::signature::Signature;
use crate::structure::{Elem, Structure};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    Comma,
    Dot,
    Arrow,
    Eq,
    Semi,
    Colon,
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn is_ident(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '@' || c == '\''
}

fn lex(text: &str) -> Result<Vec<Spanned>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let (line, col) = (ln + 1, i + 1);
            let tok = match c {
                '#' => break,
                c if c.is_whitespace() => {
                    i += 1;
                    continue;
                }
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                '.' => Tok::Dot,
                ';' => Tok::Semi,
                ':' => Tok::Colon,
                '=' => Tok::Eq,
                '-' if chars.get(i + 1) == Some(&'>') => {
                    i += 1;
                    Tok::Arrow
                }
                c if is_ident(c) => {
                    let start = i;
                    while i + 1 < chars.len() && is_ident(chars[i + 1]) {
                        i += 1;
                    }
                    Tok::Ident(chars[start..=i].iter().collect())
                }
                c => {
                    return Err(Error::Syntax {
                        line,
                        col,
                        msg: format!("unexpected character '{c}'"),
                    })
                }
            };
            out.push(Spanned { tok, line, col });
            i += 1;
        }
    }
    Ok(out)
}

fn is_var(name: &str) -> bool {
    name.chars().next().is_some_and(|c| c.is_uppercase())
}

#[derive(Clone, Debug)]
struct RawTerm {
    name: String,
    line: usize,
    col: usize,
}

#[derive(Clone, Debug)]
enum Raw {
    Atom {
        pred: RawTerm,
        args: Vec<RawTerm>,
    },
    Eq(RawTerm, RawTerm),
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|s| &s.tok)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        let (line, col) = match self.toks.get(self.pos).or(self.toks.last()) {
            Some(s) => (s.line, s.col),
            None => (1, 1),
        };
        Err(Error::Syntax {
            line,
            col,
            msg: msg.into(),
        })
    }

    fn expect(&mut self, t: Tok) -> Result<()> {
        if self.peek() == Some(&t) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {t:?}"))
        }
    }

    fn ident(&mut self) -> Result<RawTerm> {
        match self.toks.get(self.pos) {
            Some(Spanned {
                tok: Tok::Ident(s),
                line,
                col,
            }) => {
                let t = RawTerm {
                    name: s.clone(),
                    line: *line,
                    col: *col,
                };
                self.pos += 1;
                Ok(t)
            }
            _ => self.err("expected an identifier"),
        }
    }

    fn item(&mut self) -> Result<Raw> {
        let first = self.ident()?;
        match self.peek() {
            Some(Tok::LParen) => {
                self.pos += 1;
                let mut args = Vec::new();
                if self.peek() != Some(&Tok::RParen) {
                    loop {
                        args.push(self.ident()?);
                        if self.peek() == Some(&Tok::Comma) {
                            self.pos += 1;
                        } else {
                            break;
                        }
                    }
                }
                self.expect(Tok::RParen)?;
                Ok(Raw::Atom { pred: first, args })
            }
            Some(Tok::Eq) => {
                self.pos += 1;
                let rhs = self.ident()?;
                Ok(Raw::Eq(first, rhs))
            }
            _ => self.err("expected '(' or '='"),
        }
    }

    fn items(&mut self) -> Result<Vec<Raw>> {
        let mut out = vec![self.item()?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            out.push(self.item()?);
        }
        Ok(out)
    }

    fn exists_prefix(&mut self) -> Result<Vec<RawTerm>> {
        if !matches!(self.peek(), Some(Tok::Ident(s)) if s == "exists")
            || matches!(self.peek2(), Some(Tok::LParen) | Some(Tok::Eq))
        {
            return Ok(Vec::new());
        }
        self.pos += 1;
        let mut vars = vec![self.ident()?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            vars.push(self.ident()?);
        }
        self.expect(Tok::Dot)?;
        for v in &vars {
            if !is_var(&v.name) {
                return Err(Error::Syntax {
                    line: v.line,
                    col: v.col,
                    msg: format!("'{}' is not a variable", v.name),
                });
            }
        }
        Ok(vars)
    }

    fn section(&self) -> Option<String> {
        match (self.peek(), self.peek2()) {
            (Some(Tok::Ident(s)), Some(Tok::Colon)) => Some(s.clone()),
            _ => None,
        }
    }
}

fn syntax(t: &RawTerm, msg: String) -> Error {
    Error::Syntax {
        line: t.line,
        col: t.col,
        msg,
    }
}

enum Mode<'a> {
    Declare(&'a mut Signature),
    Lookup(&'a Signature),
}

impl Mode<'_> {
    fn sig(&self) -> &Signature {
        match self {
            Mode::Declare(s) => s,
            Mode::Lookup(s) => s,
        }
    }
}

fn term(mode: &mut Mode, q: &mut ConjunctiveQuery, t: &RawTerm) -> Result<Term> {
    if is_var(&t.name) {
        return Ok(Term::Var(q.var(&t.name)));
    }
    match mode {
        Mode::Declare(sig) => Ok(Term::Const(sig.add_const(&t.name))),
        Mode::Lookup(sig) => sig
            .constant(&t.name)
            .map(Term::Const)
            .ok_or_else(|| syntax(t, format!("unknown constant '{}'", t.name))),
    }
}

fn qatom(mode: &mut Mode, q: &mut ConjunctiveQuery, pred: &RawTerm, args: &[RawTerm]) -> Result<QAtom> {
    let p = match mode {
        Mode::Declare(sig) => sig
            .add_pred(&pred.name, args.len())
            .map_err(|e| syntax(pred, e.to_string()))?,
        Mode::Lookup(sig) => {
            let p = sig
                .pred(&pred.name)
                .ok_or_else(|| syntax(pred, format!("unknown predicate '{}'", pred.name)))?;
            if sig.arity(p) != args.len() {
                return Err(syntax(pred, format!("arity mismatch for {}", pred.name)));
            }
            p
        }
    };
    let args = args
        .iter()
        .map(|a| term(mode, q, a))
        .collect::<Result<Vec<_>>>()?;
    Ok(QAtom::new(p, args))
}

fn conj(mode: &mut Mode, q: &mut ConjunctiveQuery, items: &[Raw]) -> Result<Vec<QAtom>> {
    let mut atoms = Vec::new();
    for it in items {
        match it {
            Raw::Atom { pred, args } => atoms.push(qatom(mode, q, pred, args)?),
            Raw::Eq(a, b) => {
                let (v, c) = match (is_var(&a.name), is_var(&b.name)) {
                    (true, false) => (a, b),
                    (false, true) => (b, a),
                    _ => return Err(syntax(a, "equalities must be variable = constant".into())),
                };
                let Term::Var(v) = term(mode, q, v)? else { unreachable!() };
                let Term::Const(c) = term(mode, q, c)? else { unreachable!() };
                q.eqs.push((v, c));
            }
        }
    }
    Ok(atoms)
}

fn query(mode: &mut Mode, p: &mut Parser) -> Result<ConjunctiveQuery> {
    let declared = p.exists_prefix()?;
    let items = p.items()?;
    p.expect(Tok::Dot)?;
    let mut q = ConjunctiveQuery::new();
    for v in &declared {
        q.var(&v.name);
    }
    q.atoms = conj(mode, &mut q, &items)?;
    Ok(q)
}

/// Parses a program file with `theory:`, `data:` and `query:` sections.
pub fn parse_program(text: &str) -> Result<Program> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let mut sig = Signature::new();
    let mut rules = Vec::new();
    let mut facts: Vec<(crate::signature::Pred, Vec<RawTerm>)> = Vec::new();
    let mut q: Option<ConjunctiveQuery> = None;
    let mut section = "theory".to_string();
    while p.peek().is_some() {
        if let Some(s) = p.section() {
            if !["theory", "data", "query"].contains(&s.as_str()) {
                return p.err(format!("unknown section '{s}'"));
            }
            section = s;
            p.pos += 2;
            continue;
        }
        match section.as_str() {
            "theory" => {
                let body_items = p.items()?;
                p.expect(Tok::Arrow)?;
                let declared = p.exists_prefix()?;
                let head_items = p.items()?;
                p.expect(Tok::Dot)?;
                let mut mode = Mode::Declare(&mut sig);
                let mut body = ConjunctiveQuery::new();
                body.atoms = conj(&mut mode, &mut body, &body_items)?;
                let body_vars = body.used_vars();
                for v in &declared {
                    if body.vars.iter().position(|n| *n == v.name).is_some_and(|i| body_vars.contains(&(i as u32))) {
                        return Err(syntax(v, format!("existential {} occurs in the body", v.name)));
                    }
                    body.var(&v.name);
                }
                let mut head = Vec::new();
                for it in &head_items {
                    match it {
                        Raw::Atom { pred, args } => head.push(qatom(&mut mode, &mut body, pred, args)?),
                        Raw::Eq(a, _) => return Err(syntax(a, "equality in a rule head".into())),
                    }
                }
                rules.push(Rule::new(body, head));
            }
            "data" => {
                let items = p.items()?;
                p.expect(Tok::Dot)?;
                for it in items {
                    let Raw::Atom { pred, args } = it else {
                        return p.err("equality in the data section");
                    };
                    if let Some(v) = args.iter().find(|a| is_var(&a.name)) {
                        return Err(syntax(v, format!("variable {} in the data section", v.name)));
                    }
                    let pr = sig
                        .add_pred(&pred.name, args.len())
                        .map_err(|e| syntax(&pred, e.to_string()))?;
                    for a in &args {
                        if !a.name.starts_with('_') {
                            sig.add_const(&a.name);
                        }
                    }
                    facts.push((pr, args));
                }
            }
            _ => {
                if q.is_some() {
                    return p.err("only one query per program");
                }
                q = Some(query(&mut Mode::Declare(&mut sig), &mut p)?);
            }
        }
    }
    let sig = Arc::new(sig);
    let mut data = Structure::with_constants(sig.clone());
    let mut anon: HashMap<String, Elem> = HashMap::new();
    for (pr, args) in facts {
        let args: Vec<Elem> = args
            .iter()
            .map(|a| match sig.constant(&a.name) {
                Some(c) => data.elem_of(c).unwrap(),
                None => *anon
                    .entry(a.name.clone())
                    .or_insert_with(|| data.add_elem(a.name.clone())),
            })
            .collect();
        data.add(pr, &args);
    }
    Ok(Program {
        theory: Theory {
            sig,
            rules,
            hidden: None,
        },
        data,
        query: q,
    })
}

/// Parses one conjunctive query against an existing signature.
pub fn parse_query(sig: &Signature, text: &str) -> Result<ConjunctiveQuery> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let q = query(&mut Mode::Lookup(sig), &mut p)?;
    if p.peek().is_some() {
        return p.err("trailing input after the query");
    }
    Ok(q)
}

/// Parses `;`-separated conjunctive queries against an existing signature.
pub fn parse_ucq(sig: &Signature, text: &str) -> Result<UnionQuery> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let mut mode = Mode::Lookup(sig);
    let _ = mode.sig();
    let mut disjuncts = vec![query(&mut mode, &mut p)?];
    while p.peek() == Some(&Tok::Semi) {
        p.pos += 1;
        disjuncts.push(query(&mut mode, &mut p)?);
    }
    if p.peek().is_some() {
        return p.err("trailing input after the union");
    }
    Ok(UnionQuery { disjuncts })
}
