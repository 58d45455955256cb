use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mpforge::analog_map::{Budget, CellLibrary};
use mpforge::apps::ann::{ann_eval, iris, iris_weights};
use mpforge::apps::query::{bn_query, QueryConfig};
use mpforge::graph_ir::parse_bn_file;
use mpforge::mp_kernel::MpConfig;
use mpforge::Mode;

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/data")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpforge"))
        .args(args)
        .env_remove("MPFORGE_CELL_LIB")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn fail(args: &[&str]) -> String {
    let o = run(args);
    assert!(!o.status.success());
    String::from_utf8(o.stderr).unwrap()
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.path().is_file())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect()
}

fn value_after<'a>(text: &'a str, key: &str) -> &'a str {
    let line = text.lines().find(|l| l.contains(key)).unwrap();
    line.split(key).nth(1).unwrap().split_whitespace().next().unwrap()
}

#[test]
fn help_on_every_subcommand() {
    for cmd in ["synth", "ldpc", "ann", "query"] {
        let out = ok(&[cmd, "--help"]);
        assert!(out.contains("Usage: mpforge"));
        for flag in ["--in", "--stage", "--mode", "--gamma", "--splines", "--regime", "--budget-area", "--target-error", "--seed", "--out", "--snr", "--frames", "--lift"] {
            assert!(out.contains(flag), "{cmd} lacks {flag}");
        }
    }
    ok(&["--help"]);
}

#[test]
fn query_matches_library() {
    let prey = data("prey.bn");
    let bn = parse_bn_file(&std::fs::read_to_string(&prey).unwrap()).unwrap();
    let ev = [("V".to_string(), 1)];
    for mode in [Mode::Exact, Mode::Mp] {
        let cfg = QueryConfig {
            mode,
            ..QueryConfig::default()
        };
        let want = bn_query(&bn, "C", &ev, &cfg, &CellLibrary::builtin()).unwrap().probability;
        let out = ok(&["query", "--in", &prey, "--query", "C", "--evidence", "V=1", "--mode", &mode.to_string()]);
        assert!(out.starts_with("P(C = 1 | V = 1) = "));
        assert_eq!(value_after(&out, ") = "), format!("{want:.9}"));
        for stage in ["factor", "compute", "map", "netlist", "sim", "total"] {
            assert!(out.lines().any(|l| l.starts_with(stage) && l.ends_with(" ms")), "{stage}");
        }
    }
}

#[test]
fn synth_agrees_with_query() {
    let prey = data("prey.bn");
    let q = ok(&["query", "--in", &prey, "--query", "C", "--evidence", "V=1"]);
    let s = ok(&["synth", "--in", &prey, "--query", "C", "--evidence", "V=1"]);
    assert_eq!(value_after(&q, ") = "), value_after(&s, ") = "));
    assert!(s.contains("compute: 8 MUL, 5 ADD"));
}

#[test]
fn stage_limits_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let prey = data("prey.bn");
    let out = dir.path().join("f");
    ok(&["synth", "--in", &prey, "--stage", "factor", "--out", out.to_str().unwrap()]);
    assert_eq!(tree(&out).into_keys().collect::<Vec<_>>(), ["factor_graph.dot"]);
    let out = dir.path().join("m");
    ok(&["synth", "--in", &prey, "--query", "C", "--stage", "map", "--out", out.to_str().unwrap()]);
    assert_eq!(
        tree(&out).into_keys().collect::<Vec<_>>(),
        ["compute_graph.dot", "factor_graph.dot", "map.dot", "metrics.txt"]
    );
    let out = dir.path().join("all");
    ok(&["synth", "--in", &prey, "--query", "C", "--evidence", "V=1", "--out", out.to_str().unwrap()]);
    let t = tree(&out);
    assert_eq!(t.len(), 7);
    let report = String::from_utf8(t["report.txt"].clone()).unwrap();
    assert!(report.contains("probability C = 0.568000000"));
}

#[test]
fn artifacts_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut trees = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(k.to_string());
        let o = out.to_str().unwrap();
        ok(&["synth", "--in", &data("prey.bn"), "--query", "C", "--evidence", "V=1", "--mode", "mp", "--out", o]);
        ok(&["ldpc", "--frames", "50", "--snr", "2,3", "--seed", "5", "--out", &format!("{o}/ldpc")]);
        let mut t = tree(&out);
        t.extend(tree(&out.join("ldpc")).into_iter().map(|(k, v)| (format!("ldpc/{k}"), v)));
        trees.push(t);
    }
    assert!(trees[0].contains_key("ldpc/ber.csv") && trees[0].contains_key("ldpc/ber.gp"));
    assert_eq!(trees[0], trees[1]);
}

#[test]
fn config_file_and_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, format!("# prey\nin = {}\nquery = C\nevidence = V=1\nmode = mp\n", data("prey.bn"))).unwrap();
    let c = cfg.to_str().unwrap();
    let mp = ok(&["query", "--config", c]);
    assert!(mp.contains("(MP)"));
    let exact = ok(&["query", "--config", c, "--mode", "exact"]);
    assert!(exact.contains("= 0.568000000 (EXACT)"));
    std::fs::write(&cfg, "in = x.bn\nmodee = mp\n").unwrap();
    let err = fail(&["query", "--config", c]);
    assert!(err.contains("unknown key `modee`"), "{err}");
}

#[test]
fn errors_are_stage_attributed() {
    let err = fail(&["ldpc", "--in", "/nonexistent/code.alist", "--frames", "0"]);
    assert!(err.starts_with("mpforge: error: stage factor: reading /nonexistent/code.alist"), "{err}");
    let err = fail(&["synth", "--in", &data("prey.bn"), "--query", "Nope"]);
    assert!(err.contains("stage compute: unknown variable `Nope`"), "{err}");
    let err = fail(&["synth", "--in", &data("prey.bn"), "--query", "C", "--budget-area", "1"]);
    assert!(err.contains("stage map"), "{err}");
    let err = fail(&["query", "--in", &data("prey.bn"), "--query", "C", "--gamma", "0"]);
    assert!(err.contains("gamma"), "{err}");
    let err = fail(&["synth", "--in", "model.txt"]);
    assert!(err.contains("cannot tell the input kind"), "{err}");
}

#[test]
fn lifted_decoder_netlist() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("z3");
    let text = ok(&["ldpc", "--lift", "3", "--frames", "0", "--out", out.to_str().unwrap()]);
    assert!(text.starts_with("code: 72x96"), "{text}");
    let t = tree(&out);
    let sp = String::from_utf8(t["decoder.sp"].clone()).unwrap();
    assert!(sp.starts_with("* mpforge ldpc 96\n") && sp.ends_with(".END\n"));
    assert!(!t.contains_key("ber.csv"));
    let ms: f64 = value_after(&text, "synthesis ").parse().unwrap();
    assert!(ms < 1000.0);
}

#[test]
fn ann_matches_library() {
    let out = ok(&["ann", "--mode", "mp"]);
    let (_, test) = iris().split_every(5);
    let want = ann_eval(&iris_weights(), &test, Mode::Mp, &MpConfig::default(), &CellLibrary::builtin(), &Budget::default())
        .unwrap();
    assert_eq!(value_after(&out, "accuracy = "), format!("{:.6}", want.accuracy));
    assert!(out.contains(&format!("cells = {}", want.cells)));
}

#[test]
fn cell_library_override() {
    let prey = data("prey.bn");
    let args = ["synth", "--in", prey.as_str(), "--query", "C", "--stage", "map"];
    let base = ok(&args);
    let o = Command::new(env!("CARGO_BIN_EXE_mpforge"))
        .args(args)
        .env("MPFORGE_CELL_LIB", data("cells.lib"))
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(base.lines().next(), String::from_utf8_lossy(&o.stdout).lines().next());
    let o = Command::new(env!("CARGO_BIN_EXE_mpforge"))
        .args(args)
        .env("MPFORGE_CELL_LIB", "/nonexistent/cells.lib")
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/cells.lib"));
}
