use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chasebound::dump::{ColoringDump, QuotientDump, TraceDump};
use chasebound::program::parse_program;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn scratch(name: &str, text: &str) -> PathBuf {
    let p = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chasebound"))
        .args(args)
        .env_remove("CHASEBOUND_MAX_CATALOG")
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn chase_at_depth_zero_is_the_data() {
    let o = run(&["chase", "--depth", "0", path(&fixture("triangle.cb"))]);
    assert_eq!(o.status.code(), Some(0));
    let d = TraceDump::parse(&stdout(&o)).unwrap();
    assert_eq!(d.rounds.len(), 1);
    assert_eq!(d.facts_until(0), "E(a,b).\n");
}

#[test]
fn trace_dump_round_trips() {
    let o = run(&["chase", "--depth", "3", path(&fixture("chain.cb"))]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let d = TraceDump::parse(&text).unwrap();
    assert_eq!(d.to_text(), text);
    assert_eq!(d.nulls.len(), 3);
}

#[test]
fn element_budget_is_exit_three() {
    let o = run(&["chase", "--element-budget", "4", path(&fixture("chain.cb"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn certificate_verifies_and_explains() {
    let o = run(&["synth", path(&fixture("triangle.cb"))]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let cert = scratch("triangle.cert", &stdout(&o));
    let v = run(&["verify", path(&fixture("triangle.cb")), path(&cert)]);
    assert_eq!(v.status.code(), Some(0));
    assert!(stdout(&v).ends_with("model verified\n"));
    let e = run(&["explain", path(&cert)]);
    assert_eq!(e.status.code(), Some(0));
    assert!(!stdout(&e).is_empty());
}

#[test]
fn synth_is_deterministic() {
    let a = run(&["synth", path(&fixture("siblings.cb"))]);
    let b = run(&["synth", path(&fixture("siblings.cb"))]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn entailed_query_is_exit_one() {
    let p = scratch(
        "entailed.cb",
        "theory:\nE(X,Y) -> exists Z. E(Y,Z).\ndata:\nE(a,b).\nquery:\nexists X,Y,Z. E(X,Y), E(Y,Z).\n",
    );
    let o = run(&["synth", path(&p)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("entailed at chase round 1"));
}

#[test]
fn bad_model_is_exit_one() {
    let m = scratch("bad-model.cb", "data:\nE(a,b).\n");
    let o = run(&["verify", path(&fixture("triangle.cb")), path(&m)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).ends_with("not a model\n"));
}

#[test]
fn input_errors_are_exit_two() {
    assert_eq!(run(&["chase", "/nonexistent.cb"]).status.code(), Some(2));
    let broken = scratch("broken.cb", "theory:\nE(X,Y -> E(Y,X).\n");
    assert_eq!(run(&["chase", path(&broken)]).status.code(), Some(2));
    assert_eq!(run(&["synth", "--m", "0", path(&fixture("triangle.cb"))]).status.code(), Some(2));
    assert_eq!(run(&["rewrite", path(&fixture("siblings.cb"))]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn non_fc_synthesis_is_exit_three() {
    let o = run(&["synth", path(&fixture("nonfc.cb"))]);
    assert_eq!(o.status.code(), Some(3));
    let report = scratch("nonfc.report", &stdout(&o));
    let e = run(&["explain", path(&report)]);
    assert_eq!(e.status.code(), Some(0));
    assert!(stdout(&e).contains("datalog closure"));
}

#[test]
fn kappa_of_siblings() {
    let o = run(&["kappa", path(&fixture("siblings.cb"))]);
    assert_eq!((o.status.code(), stdout(&o).as_str()), (Some(0), "3\n"));
    let o = run(&["bdd-check", path(&fixture("nonfc.cb"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).ends_with("bdd unknown\n"));
}

#[test]
fn quotient_and_coloring_dumps_parse() {
    let q = run(&["quotient", "--m", "3", path(&fixture("siblings.cb"))]);
    assert_eq!(q.status.code(), Some(0));
    let d = QuotientDump::parse(&stdout(&q)).unwrap();
    assert_eq!(d.to_text(), stdout(&q));
    assert_eq!(d.n, 5);
    assert!(d.classes.iter().all(|c| c.size >= 1));

    let c = run(&["color", "--m", "3", path(&fixture("siblings.cb"))]);
    assert_eq!(c.status.code(), Some(0));
    let d = ColoringDump::parse(&stdout(&c)).unwrap();
    assert_eq!(d.to_text(), stdout(&c));
}

#[test]
fn shallow_prefix_asks_for_more_depth() {
    let chain = fixture("chain.cb");
    let o = run(&["conservative", "--m", "1", "--n", "1", path(&chain)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("deepen the chase"));
    let o = run(&["conservative", "--m", "1", "--n", "1", "--depth", "10", path(&chain)]);
    assert_eq!((o.status.code(), stdout(&o).as_str()), (Some(0), "conservative at m=1 n=1\n"));
    let o = run(&["conservative", "--fingerprints", path(&fixture("siblings.cb"))]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("conservative at m=2"));
}

#[test]
fn transform_output_is_a_program() {
    for (kind, file) in [
        ("ternarize", "wide.cb"),
        ("multihead", "ternary.cb"),
        ("guarded2bin", "guarded.cb"),
    ] {
        let o = run(&["transform", kind, path(&fixture(file))]);
        assert_eq!(o.status.code(), Some(0), "{kind}: {}", String::from_utf8_lossy(&o.stderr));
        let p = parse_program(&stdout(&o)).unwrap();
        assert!(!p.theory.rules.is_empty());
        assert!(stdout(&o).starts_with("# "));
    }
}

#[test]
fn json_output_parses() {
    let o = run(&["kappa", "--json", path(&fixture("siblings.cb"))]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["kappa"], 3);
    let o = run(&["chase", "--json", "--depth", "2", path(&fixture("chain.cb"))]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["rounds"].as_array().unwrap().len(), 3);
}

#[test]
fn normalize_query_walks_candidates() {
    let p = scratch(
        "heart.cb",
        "theory:\nE(X,Y) -> exists Z. E(Y,Z).\nquery:\nexists X,Y,Z,U. E(X,Z), E(Y,Z), E(X,U), E(U,Y).\n",
    );
    let o = run(&["normalize-query", "--steps", "2", "--seed", "7", path(&p)]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("heart"), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("candidate")).count(), 3);
    let again = run(&["normalize-query", "--steps", "2", "--seed", "7", path(&p)]);
    assert_eq!(again.stdout, o.stdout);
}
