//! Acceptance run. Prints one PASS/FAIL line per criterion and exits nonzero
//! when any criterion fails. Time limits are pinned next to each criterion.

use std::collections::HashSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chasebound::chase::{certain, chase, datalog_saturate, Certainty, Stop, DEFAULT_ELEMENTS};
use chasebound::coloring::{natural_coloring, Coloring};
use chasebound::program::{normalize_heads, parse_program, Program, Rule, Theory};
use chasebound::querynorm::{classify, measure, normalize_loop, normalize_step, Shape};
use chasebound::rewrite::{rewrite_ucq, DEFAULT_STEPS};
use chasebound::synth::{extract_skeleton, synthesize, Outcome, SynthConfig};
use chasebound::transforms::{differential, guarded_to_binary, multihead_encode, ternarize, TransformReport};
use chasebound::types::{
    build_catalog, check_conservative, fingerprint, quotient, quotients, quotients_in, show_pattern, type_bound,
    Conservativity, Region, DEFAULT_MAX_CATALOG,
};
use chasebound::{Atom, ConjunctiveQuery, Elem, Pred, QAtom, Signature, Structure, Term};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRIANGLE: &str = include_str!("../../../fixtures/triangle.cb");
const SIBLINGS: &str = include_str!("../../../fixtures/siblings.cb");
const NONFC: &str = include_str!("../../../fixtures/nonfc.cb");
const WIDE: &str = include_str!("../../../fixtures/wide.cb");
const TERNARY: &str = include_str!("../../../fixtures/ternary.cb");
const GUARDED: &str = include_str!("../../../fixtures/guarded.cb");

/// Expected model size for the triangle program, frozen from the first
/// certified run.
const TRIANGLE_MODEL_SIZE: usize = 12;
const PROPERTY_CASES: u32 = 1000;

type Verdict = Result<String, String>;
type Criterion = (u32, &'static str, Option<Duration>, fn() -> Verdict);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "uncolored chain quotient", Some(Duration::from_secs(1)), chain_quotient),
        (2, "colored chain closes a cycle", Some(Duration::from_secs(5)), colored_chain_cycle),
        (3, "type separation by fingerprints", None, type_separation),
        (4, "total orders are never conservative", None, total_orders),
        (5, "triangle program certifies", Some(Duration::from_secs(10)), triangle_program),
        (6, "datalog closure repairs the quotient", None, siblings_program),
        (7, "non-FC theory is refused", None, non_fc),
        (8, "property suites", None, properties),
        (9, "transform differential", Some(Duration::from_secs(60)), transform_differential),
        (10, "rewriting soundness", None, rewriting_soundness),
    ];
    let mut failed = 0;
    for (id, name, limit, run) in criteria {
        let start = Instant::now();
        let verdict = run();
        let took = start.elapsed();
        let verdict = match (verdict, limit) {
            (Ok(d), Some(l)) if took > l => Err(format!("{d}; took {took:.2?}, limit {l:?}")),
            (v, _) => v,
        };
        match verdict {
            Ok(d) => println!("PASS criterion {id} ({name}): {d} [{took:.2?}]"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {id} ({name}): {d} [{took:.2?}]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn chain_sig() -> (Arc<Signature>, Pred) {
    let mut sig = Signature::new();
    let e = sig.add_pred("E", 2).unwrap();
    (Arc::new(sig), e)
}

fn chain(sig: &Arc<Signature>, e: Pred, len: usize) -> Structure {
    let mut s = Structure::new(sig.clone());
    for i in 0..len {
        s.add_elem(format!("_a{i}"));
    }
    for i in 1..len as u32 {
        s.add(e, &[Elem(i - 1), Elem(i)]);
    }
    s
}

fn prefix_region(s: &Structure, bound: usize) -> Region {
    let n = s.num_elems();
    Region::from_depths(s, (0..n).collect(), n - 1, bound)
}

fn edges(s: &Structure) -> Vec<(u32, u32)> {
    let mut v: Vec<(u32, u32)> = s
        .atoms()
        .filter(|a| a.args.len() == 2)
        .map(|a| (a.args[0].0, a.args[1].0))
        .collect();
    v.sort();
    v
}

fn chain_quotient() -> Verdict {
    let (sig, e) = chain_sig();
    let c = chain(&sig, e, 40);
    for n in 1..=6 {
        let q = quotient(&c, n, &prefix_region(&c, type_bound(n))).map_err(|e| e.to_string())?;
        ensure(q.num_classes() == n + 1, || format!("n={n}: {} classes", q.num_classes()))?;
        let mut want: Vec<(u32, u32)> = (0..n as u32).map(|i| (i, i + 1)).collect();
        want.push((n as u32, n as u32));
        ensure(edges(&q.quotient) == want, || format!("n={n}: edges {:?}", edges(&q.quotient)))?;
    }
    Ok("n=1..6 give n+1 classes with the loop on the last".into())
}

fn colored_chain_cycle() -> Verdict {
    let mut sig = Signature::new();
    let e = sig.add_pred("E", 2).unwrap();
    let ks: Vec<Pred> = (0..3).map(|h| sig.color(h, 0)).collect();
    let sig = Arc::new(sig);
    let mut c = chain(&sig, e, 50);
    for i in 0..50u32 {
        c.add(ks[(i % 3) as usize], &[Elem(i)]);
    }
    let q = quotient(&c, 4, &prefix_region(&c, type_bound(4))).map_err(|e| e.to_string())?;
    ensure(q.num_classes() == 7, || format!("{} classes", q.num_classes()))?;
    let mut want: Vec<(u32, u32)> = (0..6).map(|i| (i, i + 1)).collect();
    want.push((6, 4));
    ensure(edges(&q.quotient) == want, || format!("edges {:?}", edges(&q.quotient)))?;
    ensure(check_conservative(&c, &q, 2).is_conservative(), || "not conservative at m=2".into())?;
    match check_conservative(&c, &q, 3) {
        Conservativity::Witness { pattern, .. } => {
            let text = show_pattern(&pattern);
            ensure(pattern.structure.num_elems() == 3 && text.matches("E(").count() == 3, || {
                format!("m=3 witness is {text}")
            })?;
            Ok(format!("7 classes, cycle b4 b5 b6, m=3 witness {text}"))
        }
        Conservativity::Conservative => Err("the 3-cycle is not detected at m=3".into()),
    }
}

fn type_separation() -> Verdict {
    let (sig, e) = chain_sig();
    let c = chain(&sig, e, 8);
    let mut tri = Structure::new(sig.clone());
    for i in 0..3 {
        tri.add_elem(format!("_t{i}"));
    }
    for i in 0..3u32 {
        tri.add(e, &[Elem(i), Elem((i + 1) % 3)]);
    }
    let cat2 = build_catalog(&sig, &[e], 2, DEFAULT_MAX_CATALOG).map_err(|e| e.to_string())?;
    ensure(
        fingerprint(&c, Elem(3), &cat2) == fingerprint(&tri, Elem(0), &cat2),
        || "fingerprints differ at m=2".into(),
    )?;
    let cat3 = build_catalog(&sig, &[e], 3, DEFAULT_MAX_CATALOG).map_err(|e| e.to_string())?;
    let diff = fingerprint(&c, Elem(3), &cat3).diff(&fingerprint(&tri, Elem(0), &cat3));
    ensure(diff.len() == 1, || format!("{} differing patterns at m=3", diff.len()))?;
    let p = &cat3.patterns[diff[0]];
    ensure(p.structure.len() == 3 && p.structure.num_elems() == 3, || {
        format!("m=3 difference is {}", show_pattern(p))
    })?;
    Ok(format!(
        "{} patterns agree at m=2; at m=3 only {} differs",
        cat2.len(),
        show_pattern(p)
    ))
}

fn total_orders() -> Verdict {
    let (sig, e) = chain_sig();
    let mut runs = 0;
    for len in [10usize, 15, 20, 25, 30] {
        let mut order = Structure::new(sig.clone());
        for i in 0..len {
            order.add_elem(format!("_o{i}"));
        }
        for i in 0..len as u32 {
            for j in i + 1..len as u32 {
                order.add(e, &[Elem(i), Elem(j)]);
            }
        }
        let depth: Vec<usize> = (0..len).collect();
        for p in 1..=3 {
            let col = Coloring::periodic(&order, &depth, p).map_err(|e| e.to_string())?;
            let c = col.colored();
            let regions: Vec<Region> = (1..=6)
                .map(|n| Region::from_depths(c, depth.clone(), len - 1, type_bound(n)))
                .collect();
            let jobs: Vec<(usize, &Region)> = (1..=6).zip(regions.iter()).collect();
            let qs = quotients_in(c, &jobs).map_err(|e| format!("len={len} p={p}: {e}"))?;
            for q in &qs {
                runs += 1;
                match check_conservative(c, q, 1) {
                    Conservativity::Witness { pattern, .. } if show_pattern(&pattern) == "exists Y. E(Y,Y)." => {}
                    Conservativity::Witness { pattern, .. } => {
                        return Err(format!("len={len} p={p} n={}: witness {}", q.n, show_pattern(&pattern)))
                    }
                    Conservativity::Conservative => {
                        return Err(format!("len={len} p={p} n={} is conservative", q.n))
                    }
                }
            }
        }
    }
    Ok(format!("{runs} quotients, each fails at size 1 with exists Y. E(Y,Y)."))
}

/// Ground atoms keyed by predicate and element names, so that structures
/// over different signatures compare.
fn named_atoms(s: &Structure) -> HashSet<(String, Vec<String>)> {
    s.atoms()
        .map(|a| {
            (
                s.sig().name(a.pred).to_string(),
                a.args.iter().map(|&e| s.name(e).to_string()).collect(),
            )
        })
        .collect()
}

/// Brute-force check of `body -> head` over every assignment.
fn satisfies(m: &Structure, sig: &Signature, rule: &Rule) -> bool {
    let facts = named_atoms(m);
    let names: Vec<String> = m.elems().map(|e| m.name(e).to_string()).collect();
    let nv = rule.body.vars.len();
    let body_vars: Vec<usize> = (0..nv)
        .filter(|&v| rule.body.atoms.iter().any(|a| a.vars().any(|x| x as usize == v)))
        .collect();
    let ex: Vec<usize> = (0..nv)
        .filter(|v| !body_vars.contains(v) && rule.head.iter().any(|a| a.vars().any(|x| x as usize == *v)))
        .collect();
    let holds = |atoms: &[QAtom], asg: &[usize]| {
        atoms.iter().all(|a| {
            let args = a
                .args
                .iter()
                .map(|t| match *t {
                    Term::Var(v) => names[asg[v as usize]].clone(),
                    Term::Const(c) => sig.const_name(c).to_string(),
                })
                .collect();
            facts.contains(&(sig.name(a.pred).to_string(), args))
        })
    };
    let mut asg = vec![0usize; nv];
    for_each(&body_vars, names.len(), &mut asg, &mut |asg| {
        if !holds(&rule.body.atoms, asg) {
            return true;
        }
        let mut ext = asg.to_vec();
        !for_each(&ex, names.len(), &mut ext, &mut |ext| !holds(&rule.head, ext))
    })
}

/// Calls `f` on every assignment of `vars`; stops and returns false as soon
/// as `f` does.
fn for_each(vars: &[usize], n: usize, asg: &mut [usize], f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
    match vars.split_first() {
        None => f(asg),
        Some((&v, rest)) => (0..n).all(|x| {
            asg[v] = x;
            for_each(rest, n, asg, f)
        }),
    }
}

fn query_holds(m: &Structure, sig: &Signature, q: &ConjunctiveQuery) -> bool {
    let facts = named_atoms(m);
    let names: Vec<String> = m.elems().map(|e| m.name(e).to_string()).collect();
    let vars: Vec<usize> = (0..q.vars.len()).collect();
    let mut asg = vec![0usize; vars.len()];
    // Search stops at the first satisfying assignment.
    !for_each(&vars, names.len(), &mut asg, &mut |asg| {
        !q.atoms.iter().all(|a| {
            let args = a
                .args
                .iter()
                .map(|t| match *t {
                    Term::Var(v) => names[asg[v as usize]].clone(),
                    Term::Const(c) => sig.const_name(c).to_string(),
                })
                .collect();
            facts.contains(&(sig.name(a.pred).to_string(), args))
        })
    })
}

fn contains_data(m: &Structure, d: &Structure) -> bool {
    let have = named_atoms(m);
    named_atoms(d).is_subset(&have)
}

fn triangle_program() -> Verdict {
    let p = parse_program(TRIANGLE).map_err(|e| e.to_string())?;
    let q = p.query.clone().ok_or("fixture has no query")?;
    let out = synthesize(&p.theory, &p.data, Some(&q), &SynthConfig::default()).map_err(|e| e.to_string())?;
    let Outcome::Certified(cert, m) = out else {
        return Err(format!("no certificate: {out:?}"));
    };
    ensure(cert.verification.passed(), || "certificate checks failed".into())?;
    for name in ["U", chasebound::program::HIDDEN] {
        let n = m.sig().pred(name).map_or(0, |p| m.count_pred(p));
        ensure(n == 0, || format!("{n} {name} atoms in the model"))?;
    }
    for (i, r) in p.theory.rules.iter().enumerate() {
        ensure(satisfies(&m, &p.theory.sig, r), || format!("rule {} violated", i + 1))?;
    }
    ensure(contains_data(&m, &p.data), || "model misses a database fact".into())?;
    ensure(!query_holds(&m, &p.theory.sig, &q), || "query holds in the model".into())?;
    ensure(m.num_elems() == TRIANGLE_MODEL_SIZE, || format!("model has {} elements", m.num_elems()))?;
    Ok(format!("{}-element model, no U or sentinel atoms, brute-force checked", m.num_elems()))
}

fn siblings_program() -> Verdict {
    let p = parse_program(SIBLINGS).map_err(|e| e.to_string())?;
    let out = synthesize(&p.theory, &p.data, None, &SynthConfig::default()).map_err(|e| e.to_string())?;
    let Outcome::Certified(cert, model) = out else {
        return Err(format!("no certificate: {out:?}"));
    };
    let params = cert.params.ok_or("certified by a chase fixpoint")?;
    let t = normalize_heads(&p.theory).map_err(|e| e.to_string())?;
    let d = p.data.clone().upgrade(t.sig.clone()).map_err(|e| e.to_string())?;
    let trace = chase(&d, &t, params.depth, DEFAULT_ELEMENTS);
    let skel = extract_skeleton(&trace, &d, &t).map_err(|e| e.to_string())?;
    let col = natural_coloring(&skel.structure, params.m, Some(params.period)).map_err(|e| e.to_string())?;
    let region = Region::from_depths(&skel.structure, skel.depth.clone(), trace.rounds(), type_bound(params.n));
    let q = quotient(col.colored(), params.n, &region).map_err(|e| e.to_string())?;
    ensure(check_conservative(col.colored(), &q, params.m).is_conservative(), || {
        "quotient is not conservative".into()
    })?;
    let plain = q.quotient.uncolored();
    let datalog = &p.theory.rules[1];
    ensure(!satisfies(&plain, &p.theory.sig, datalog), || {
        "the quotient already satisfies the datalog rule".into()
    })?;
    let (closed, demand) = datalog_saturate(&plain, &t);
    ensure(demand.is_empty(), || format!("{} unmet TGD triggers after closure", demand.len()))?;
    for (i, r) in p.theory.rules.iter().enumerate() {
        ensure(satisfies(&closed, &p.theory.sig, r), || format!("closure violates rule {}", i + 1))?;
    }
    ensure(named_atoms(&closed) == named_atoms(&model), || "closure differs from the certified model".into())?;
    let r = closed.sig().pred("R").unwrap();
    Ok(format!(
        "m={} n={} depth={} period={}: quotient misses R, closure adds {} R atoms and certifies",
        params.m,
        params.n,
        params.depth,
        params.period,
        closed.count_pred(r) - plain.count_pred(r)
    ))
}

/// Naive closure of `R(x,y), E(x,x1), E(y,z), E(z,y1) -> R(x1,y1)` on a
/// functional successor graph.
fn lasso_closure(succ: &[usize], start: usize) -> HashSet<(usize, usize)> {
    let mut r = HashSet::from([(start, start)]);
    loop {
        let next: Vec<(usize, usize)> = r.iter().map(|&(x, y)| (succ[x], succ[succ[y]])).collect();
        let before = r.len();
        r.extend(next);
        if r.len() == before {
            return r;
        }
    }
}

fn non_fc() -> Verdict {
    let p = parse_program(NONFC).map_err(|e| e.to_string())?;
    let q = p.query.clone().ok_or("fixture has no query")?;
    let deep = certain(&p.theory, &p.data, &q, 40);
    ensure(!matches!(deep, Certainty::Entailed(_)), || format!("entailed at depth 40: {deep:?}"))?;

    let start = Instant::now();
    let dl = p.theory.datalog_only();
    let (sig, e, r) = {
        let s = &p.theory.sig;
        (s.clone(), s.pred("E").unwrap(), s.pred("R").unwrap())
    };
    let mut lassos = 0;
    for tail in 0..=4usize {
        for cycle in 1..=6usize {
            let len = tail + cycle;
            if len < 2 {
                continue;
            }
            let succ: Vec<usize> = (0..len).map(|i| if i + 1 < len { i + 1 } else { tail }).collect();
            let mut m = Structure::with_constants(sig.clone());
            let a0 = m.elem_by_name("a0").unwrap();
            let a1 = m.elem_by_name("a1").unwrap();
            let mut node = vec![a0, a1];
            for i in 2..len {
                node.push(m.add_elem(format!("_v{i}")));
            }
            for i in 0..len {
                m.add(e, &[node[i], node[succ[i]]]);
            }
            m.add(r, &[a0, a0]);
            let (closed, demand) = datalog_saturate(&m, &dl);
            ensure(demand.is_empty(), || "datalog-only theory has demand".into())?;
            let oracle = lasso_closure(&succ, 0);
            let got: HashSet<(usize, usize)> = closed
                .atoms()
                .filter(|a| a.pred == r)
                .map(|a| {
                    let ix = |x: Elem| node.iter().position(|&n| n == x).unwrap();
                    (ix(a.args[0]), ix(a.args[1]))
                })
                .collect();
            ensure(got == oracle, || format!("tail {tail} cycle {cycle}: closure differs from the oracle"))?;
            let has_pred: HashSet<usize> = succ.iter().copied().collect();
            ensure(oracle.iter().any(|&(x, y)| x == y && has_pred.contains(&y)), || {
                format!("tail {tail} cycle {cycle}: no R(y,y) below an E edge")
            })?;
            ensure(query_holds(&closed, &sig, &q), || format!("tail {tail} cycle {cycle}: query fails"))?;
            lassos += 1;
        }
    }
    let lasso_time = start.elapsed();
    ensure(lasso_time < Duration::from_secs(5), || format!("lassos took {lasso_time:.2?}"))?;

    let out = synthesize(&p.theory, &p.data, Some(&q), &SynthConfig::default()).map_err(|e| e.to_string())?;
    let Outcome::Exhausted(f) = out else {
        return Err(format!("synthesis did not give up: {out:?}"));
    };
    Ok(format!(
        "depth 40 gives {deep:?}; {lassos} lassos satisfy the query [{lasso_time:.2?}]; synthesis exhausted after {} attempts",
        f.attempts.len()
    ))
}

fn runner(cases: u32) -> TestRunner {
    let cfg = Config {
        cases,
        failure_persistence: None,
        max_global_rejects: 1_000_000,
        ..Config::default()
    };
    TestRunner::new_with_rng(cfg, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn graph_sig(consts: usize) -> Arc<Signature> {
    let mut sig = Signature::new();
    sig.add_pred("E", 2).unwrap();
    sig.add_pred("A", 1).unwrap();
    for i in 0..consts {
        sig.add_const(&format!("c{i}"));
    }
    Arc::new(sig)
}

fn arb_graph(sig: Arc<Signature>) -> impl Strategy<Value = Structure> {
    (1usize..8, proptest::collection::vec((0u32..8, 0u32..8, 0u8..4), 0..12)).prop_map(move |(n, raw)| {
        let e = sig.pred("E").unwrap();
        let a = sig.pred("A").unwrap();
        let mut s = Structure::with_constants(sig.clone());
        for i in 0..n {
            s.add_elem(format!("_e{i}"));
        }
        let k = s.num_elems() as u32;
        for (x, y, kind) in raw {
            let (x, y) = (Elem(x % k), Elem(y % k));
            if kind == 0 {
                s.add(a, &[x]);
            } else {
                s.add(e, &[x, y]);
            }
        }
        s
    })
}

fn property<S: Strategy>(
    name: &str,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    let out = runner(PROPERTY_CASES).run(&strategy, test);
    match out {
        Ok(()) => {
            println!("  property {name}: ok ({PROPERTY_CASES} cases)");
            Ok(())
        }
        Err(e) => {
            let msg = match e {
                proptest::test_runner::TestError::Fail(reason, _) => reason.to_string(),
                other => other.to_string(),
            };
            println!("  property {name}: FAILED, {msg}");
            Err(format!("{name}: {msg}"))
        }
    }
}

fn properties() -> Verdict {
    let mut failures = Vec::new();
    let mut record = |r: Result<(), String>| {
        if let Err(e) = r {
            failures.push(e);
        }
    };

    let plain = graph_sig(0);
    record(property(
        "quotient map is a homomorphism",
        (arb_graph(plain.clone()), 1usize..5),
        |(s, n)| {
            let q = quotient(&s, n, &Region::all(&s)).map_err(|e| TestCaseError::fail(e.to_string()))?;
            for a in s.atoms() {
                let img = Atom::new(a.pred, a.args.iter().map(|&e| q.q(e)));
                prop_assert!(q.quotient.contains(&img), "image of {} missing", s.show_atom(a));
            }
            Ok(())
        },
    ));
    record(property(
        "classes refine as n grows",
        (arb_graph(plain.clone()), 1usize..5),
        |(s, n)| {
            let qs = quotients(&s, &[n, n + 1], &Region::all(&s)).map_err(|e| TestCaseError::fail(e.to_string()))?;
            for d in s.elems() {
                for e in s.elems() {
                    if qs[1].q(d) == qs[1].q(e) {
                        prop_assert_eq!(qs[0].q(d), qs[0].q(e));
                    }
                }
            }
            Ok(())
        },
    ));
    let preds: Vec<Pred> = plain.preds().collect();
    let cat = build_catalog(&plain, &preds, 2, DEFAULT_MAX_CATALOG).expect("small catalog");
    record(property(
        "positive types only grow under the quotient",
        (arb_graph(plain.clone()), 1usize..5),
        |(s, n)| {
            let q = quotient(&s, n, &Region::all(&s)).map_err(|e| TestCaseError::fail(e.to_string()))?;
            for e in s.elems() {
                let before = fingerprint(&s, e, &cat);
                let after = fingerprint(&q.quotient, q.q(e), &cat);
                prop_assert!(before.subset_of(&after), "type of {} shrinks", s.name(e));
            }
            Ok(())
        },
    ));
    record(property(
        "constants keep singleton classes",
        (arb_graph(graph_sig(3)), 1usize..5),
        |(s, n)| {
            let q = quotient(&s, n, &Region::all(&s)).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let members = q.members();
            for c in s.sig().consts() {
                let e = s.elem_of(c).unwrap();
                prop_assert_eq!(&members[q.q(e).ix()], &vec![e]);
                prop_assert_eq!(q.quotient.elem_of(c), Some(q.q(e)));
            }
            Ok(())
        },
    ));
    record(property("skeletons are bounded forests", arb_program(), skeleton_bounds));
    record(property("no short cycles in colored quotients", arb_forest(), no_short_cycles));
    record(property("measure decreases on every acyclic candidate", arb_heart(), measure_decreases));
    record(property("normalisation terminates", (arb_heart(), any::<u64>()), normalisation_terminates));

    if failures.is_empty() {
        Ok(format!("8 properties, {PROPERTY_CASES} cases each"))
    } else {
        Err(failures.join("; "))
    }
}

const BIN: [&str; 3] = ["E", "F", "G"];

/// Rules as `(body, head, existential)`: body atoms over `X0..X2` and a head
/// whose second argument is either fresh or another body variable.
#[derive(Clone, Debug)]
struct RandomRule {
    body: Vec<(usize, usize, usize)>,
    head: (usize, usize, usize),
    tgd: bool,
}

fn arb_program() -> impl Strategy<Value = Program> {
    let rule = (
        proptest::collection::vec((0usize..3, 0usize..3, 0usize..3), 1..3),
        (0usize..3, 0usize..3, 0usize..3),
        any::<bool>(),
    )
        .prop_map(|(body, head, tgd)| RandomRule { body, head, tgd });
    (
        proptest::collection::vec(rule, 1..5),
        proptest::collection::vec((0usize..3, 0usize..3, 0usize..3), 1..5),
    )
        .prop_map(|(rules, facts)| {
            let mut text = String::from("theory:\n");
            for r in rules {
                let vars: Vec<usize> = r.body.iter().flat_map(|&(_, x, y)| [x, y]).collect();
                let body: Vec<String> = r.body.iter().map(|&(p, x, y)| format!("{}(X{x},X{y})", BIN[p])).collect();
                let y = vars[r.head.1 % vars.len()];
                let head = if r.tgd {
                    format!("exists Z. {}(X{y},Z)", BIN[r.head.0])
                } else {
                    format!("{}(X{y},X{})", BIN[r.head.0], vars[r.head.2 % vars.len()])
                };
                text += &format!("{} -> {head}.\n", body.join(", "));
            }
            text += "data:\n";
            for (p, x, y) in facts {
                text += &format!("{}(c{x},c{y}).\n", BIN[p]);
            }
            parse_program(&text).expect("generated program parses")
        })
}

fn skeleton_bounds(p: Program) -> Result<(), TestCaseError> {
    let fail = |e: chasebound::Error| TestCaseError::fail(e.to_string());
    let t = normalize_heads(&p.theory).map_err(fail)?;
    let d = p.data.clone().upgrade(t.sig.clone()).map_err(fail)?;
    let tr = chase(&d, &t, 5, 4000);
    if tr.stop == Stop::Elements {
        return Ok(());
    }
    let c = &tr.result;
    let from_d: HashSet<&Atom> = d.atoms().collect();
    let n = c.num_elems();
    let mut indeg = vec![0usize; n];
    let mut degree = vec![0usize; n];
    let mut succ = vec![Vec::new(); n];
    for a in c.atoms().filter(|a| a.args.len() == 2 && (from_d.contains(a) || t.sig.is_tgp(a.pred))) {
        let (x, y) = (a.args[0], a.args[1]);
        if c.is_const(x) || c.is_const(y) {
            continue;
        }
        indeg[y.ix()] += 1;
        degree[x.ix()] += 1;
        degree[y.ix()] += 1;
        succ[x.ix()].push(y.ix());
    }
    let bound = t.sig.base_preds().len() + 1;
    for e in c.elems() {
        prop_assert!(indeg[e.ix()] <= 1, "{} has {} parents", c.name(e), indeg[e.ix()]);
        prop_assert!(degree[e.ix()] <= bound, "{} has degree {}", c.name(e), degree[e.ix()]);
    }
    let mut left = indeg.clone();
    let mut queue: Vec<usize> = (0..n).filter(|&i| left[i] == 0).collect();
    let mut seen = 0;
    while let Some(v) = queue.pop() {
        seen += 1;
        for &u in &succ[v] {
            left[u] -= 1;
            if left[u] == 0 {
                queue.push(u);
            }
        }
    }
    prop_assert_eq!(seen, n, "skeleton has a directed cycle");
    prop_assert!(extract_skeleton(&tr, &d, &t).is_ok());
    Ok(())
}

#[derive(Clone, Debug)]
struct Forest {
    parents: Vec<Option<(usize, usize)>>,
    m: usize,
    extra: usize,
}

fn arb_forest() -> impl Strategy<Value = Forest> {
    (
        proptest::collection::vec(proptest::option::weighted(0.9, (0usize..64, 0usize..2)), 2..20),
        2usize..5,
        0usize..2,
    )
        .prop_map(|(raw, m, extra)| Forest {
            parents: raw
                .into_iter()
                .enumerate()
                .map(|(i, p)| if i == 0 { None } else { p.map(|(x, k)| (x % i, k)) })
                .collect(),
            m,
            extra,
        })
}

fn no_short_cycles(f: Forest) -> Result<(), TestCaseError> {
    let mut sig = Signature::new();
    let preds = [sig.add_pred("E", 2).unwrap(), sig.add_pred("F", 2).unwrap()];
    let mut s = Structure::new(Arc::new(sig));
    for i in 0..f.parents.len() {
        s.add_elem(format!("_v{i}"));
    }
    for (i, p) in f.parents.iter().enumerate() {
        if let Some((x, k)) = *p {
            s.add(preds[k], &[Elem(x as u32), Elem(i as u32)]);
        }
    }
    let col = natural_coloring(&s, f.m, None).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let c = col.colored();
    let n = f.m + f.extra;
    let q = quotient(c, n, &Region::all(c)).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let k = q.num_classes();
    let mut step = vec![vec![false; k]; k];
    for a in q.quotient.atoms().filter(|a| a.args.len() == 2) {
        step[a.args[0].ix()][a.args[1].ix()] = true;
    }
    // reach[x][y]: a walk of exactly `len` edges from x to y.
    let mut reach = step.clone();
    for len in 1..f.m {
        for (x, row) in reach.iter().enumerate() {
            prop_assert!(!row[x], "closed walk of length {len} through class {x}, m={}, n={n}", f.m);
        }
        let mut next = vec![vec![false; k]; k];
        for x in 0..k {
            for y in (0..k).filter(|&y| reach[x][y]) {
                for z in (0..k).filter(|&z| step[y][z]) {
                    next[x][z] = true;
                }
            }
        }
        reach = next;
    }
    Ok(())
}

fn arb_heart() -> impl Strategy<Value = ConjunctiveQuery> {
    (3usize..7, proptest::collection::vec((0usize..6, 0usize..6, 0usize..2), 3..8)).prop_filter_map(
        "not a heart form",
        |(nv, raw)| {
            let mut sig = Signature::new();
            let preds = [sig.add_pred("E", 2).unwrap(), sig.add_pred("F", 2).unwrap()];
            let mut q = ConjunctiveQuery::new();
            let vars: Vec<_> = (0..nv).map(|i| q.var(&format!("X{i}"))).collect();
            for (x, y, p) in raw {
                let (x, y) = (x % nv, y % nv);
                if x != y {
                    q.atom(preds[p], [Term::Var(vars[x]), Term::Var(vars[y])]);
                }
            }
            let q = q.compact();
            matches!(classify(&q).shape, Shape::Heart(_)).then_some(q)
        },
    )
}

/// `Σ occ(x) · |{y ≠ x : y reaches x}|`, by transitive closure.
fn oracle_measure(q: &ConjunctiveQuery) -> usize {
    let n = q.vars.len();
    let mut r = vec![vec![false; n]; n];
    for a in &q.atoms {
        if let [Term::Var(x), Term::Var(y)] = a.args.as_slice() {
            r[*x as usize][*y as usize] = true;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if r[i][k] && r[k][j] {
                    r[i][j] = true;
                }
            }
        }
    }
    let mut occ = vec![0usize; n];
    for a in &q.atoms {
        for v in a.vars() {
            occ[v as usize] += 1;
        }
    }
    (0..n)
        .map(|x| occ[x] * (0..n).filter(|&y| y != x && r[y][x]).count())
        .sum()
}

fn show(q: &ConjunctiveQuery) -> String {
    let mut sig = Signature::new();
    sig.add_pred("E", 2).unwrap();
    sig.add_pred("F", 2).unwrap();
    q.show(&sig)
}

fn measure_decreases(q: ConjunctiveQuery) -> Result<(), TestCaseError> {
    let before = oracle_measure(&q);
    prop_assert_eq!(measure(&q), before);
    let cands = normalize_step(&classify(&q), None).map_err(|e| TestCaseError::fail(e.to_string()))?;
    // Candidates that close a directed cycle leave the heart-form loop.
    for (i, c) in cands.iter().enumerate() {
        if matches!(classify(&c.query).shape, Shape::DirectedCycle(_)) {
            continue;
        }
        let after = oracle_measure(&c.query);
        prop_assert!(
            after < before,
            "candidate {} of {} goes {before} -> {after} ({})",
            i + 1,
            show(&q),
            show(&c.query)
        );
    }
    Ok(())
}

fn normalisation_terminates((q, seed): (ConjunctiveQuery, u64)) -> Result<(), TestCaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let limit = 256;
    let walk = normalize_loop(&q, limit, |_, c| rng.gen_range(0..c.len()));
    let last = walk.last().unwrap();
    prop_assert!(
        walk.len() <= limit && !matches!(last.shape, Shape::Heart(_)),
        "{} still a heart form after {limit} steps",
        show(&q)
    );
    Ok(())
}

/// The fixture's theory with `consts` added to its signature.
fn with_consts(p: &Program, consts: &[&str]) -> Theory {
    let mut sig = (*p.theory.sig).clone();
    for c in consts {
        sig.add_const(c);
    }
    Theory {
        sig: Arc::new(sig),
        ..p.theory.clone()
    }
}

fn fact(d: &mut Structure, pred: &str, args: &[&str]) {
    let sig = d.sig_arc().clone();
    let p = sig.pred(pred).unwrap();
    let es: Vec<Elem> = args.iter().map(|a| d.elem_of(sig.constant(a).unwrap()).unwrap()).collect();
    d.add(p, &es);
}

fn random_flat(t: &Theory, preds: &[&str], pool: &[&str], rng: &mut ChaCha8Rng) -> Structure {
    let mut d = Structure::with_constants(t.sig.clone());
    for _ in 0..rng.gen_range(1..=4) {
        let p = preds[rng.gen_range(0..preds.len())];
        let k = t.sig.arity(t.sig.pred(p).unwrap());
        let args: Vec<&str> = (0..k).map(|_| pool[rng.gen_range(0..pool.len())]).collect();
        fact(&mut d, p, &args);
    }
    d
}

/// A forest of `G` creation facts with `A` facts on its elements.
fn random_guarded(t: &Theory, pool: &[&str], rng: &mut ChaCha8Rng) -> Structure {
    let mut d = Structure::with_constants(t.sig.clone());
    let made = rng.gen_range(2..=pool.len());
    for i in 1..made {
        let x = pool[rng.gen_range(0..i)];
        let y = pool[rng.gen_range(0..i)];
        fact(&mut d, "G", &[x, y, pool[i]]);
    }
    for _ in 0..rng.gen_range(0..=2) {
        fact(&mut d, "A", &[pool[rng.gen_range(0..made)]]);
    }
    d
}

fn transform_differential() -> Verdict {
    let pool = ["a", "b", "c", "d"];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut summary = Vec::new();
    let mut disagreements = Vec::new();
    type Build = fn(&Theory, Option<&ConjunctiveQuery>) -> chasebound::Result<TransformReport>;
    let fixtures: [(&str, &str, Build, &[&str]); 3] = [
        ("ternarize", WIDE, ternarize, &["E", "R"]),
        ("multihead", TERNARY, |t, _| multihead_encode(t), &["P1", "P2", "P"]),
        ("guarded2bin", GUARDED, guarded_to_binary, &[]),
    ];
    for (name, text, build, preds) in fixtures {
        let p = parse_program(text).map_err(|e| e.to_string())?;
        let t = with_consts(&p, &pool);
        let q = p.query.clone().ok_or("fixture has no query")?;
        let r = build(&t, Some(&q)).map_err(|e| format!("{name}: {e}"))?;
        let mut entailed = 0;
        for i in 0..20 {
            let d = if preds.is_empty() {
                random_guarded(&t, &pool, &mut rng)
            } else {
                random_flat(&t, preds, &pool[..3], &mut rng)
            };
            for depth in 2..=5 {
                let diff = differential(&r, &d, &q, depth).map_err(|e| format!("{name} database {i}: {e}"))?;
                if matches!(diff.source, Certainty::Entailed(_)) {
                    entailed += 1;
                }
                if !diff.agree() {
                    disagreements.push(format!("{name} database {i} depth {depth}: {diff:?}"));
                }
            }
        }
        summary.push(format!("{name} {entailed}/80 entailed"));
    }
    ensure(disagreements.is_empty(), || {
        format!("{} disagreements, first {}", disagreements.len(), disagreements[0])
    })?;
    Ok(format!("0 disagreements over 240 runs ({})", summary.join(", ")))
}

fn rewriting_soundness() -> Verdict {
    let p = parse_program(SIBLINGS).map_err(|e| e.to_string())?;
    let t = with_consts(&p, &["a", "b", "c"]);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let rewritten: Vec<_> = t.rules.iter().map(|r| rewrite_ucq(&r.body, &t, DEFAULT_STEPS)).collect();
    ensure(rewritten.iter().all(|r| r.terminated), || "a rewriting did not terminate".into())?;
    let mut checked = 0;
    let mut positive = 0;
    for i in 0..20 {
        let d = random_flat(&t, &["E", "R"], &["a", "b", "c"], &mut rng);
        for (rule, rw) in t.rules.iter().zip(&rewritten) {
            let by_rewriting = rw.result.holds(&d);
            let by_chase = matches!(certain(&t, &d, &rule.body, 8), Certainty::Entailed(_));
            ensure(by_rewriting == by_chase, || {
                format!("database {i}: rewriting says {by_rewriting}, chase says {by_chase}")
            })?;
            checked += 1;
            positive += by_chase as usize;
        }
    }
    Ok(format!("{checked} checks agree, {positive} entailed"))
}
