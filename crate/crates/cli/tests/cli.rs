use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const MALTSEV: &str =
    "# Maltsev term\ntheory maltsev\nop p/3\naxiom p(x,y,y) = x\naxiom p(y,y,x) = x\n";

fn linvar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linvar"))
        .args(args)
        .env_remove("LINVAR_BUDGET")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn classifies_maltsev() {
    let dir = TempDir::new().unwrap();
    let m = write(dir.path(), "maltsev.thy", MALTSEV);
    let o = linvar(&["classify", s(&m)]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(
        out.contains("CM: yes") && out.contains("NCI: yes") && out.contains("n-permutable: yes"),
        "{out}"
    );
}

#[test]
fn classifies_semilattice_with_models() {
    let o = linvar(&["classify", "preset:semilattice"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("CM: no (2-element model"), "{out}");
    assert!(out.contains("n-permutable: no"), "{out}");
}

#[test]
fn entail_reports_countermodel() {
    let dir = TempDir::new().unwrap();
    let m = write(dir.path(), "maltsev.thy", MALTSEV);
    let o = linvar(&["entail", s(&m), "x = p(y,x,x)"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(
        stdout(&o).starts_with("not entailed; countermodel size 2"),
        "{}",
        stdout(&o)
    );

    let o = linvar(&["entail", s(&m), "p(x,y,y) = x"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("entailed; 1-step derivation"));
}

#[test]
fn validate_names_the_non_linear_axiom() {
    let dir = TempDir::new().unwrap();
    let bad = write(
        dir.path(),
        "bad.thy",
        "theory bad\nop f/2\naxiom f(f(x,y),y) = x\n",
    );
    let o = linvar(&["validate", s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("not linear: axiom"), "{}", stderr(&o));
}

#[test]
fn parse_errors_carry_the_line() {
    let dir = TempDir::new().unwrap();
    let bad = write(
        dir.path(),
        "arity.thy",
        "theory t\nop p/3\naxiom p(x,y) = x\n",
    );
    let o = linvar(&["validate", s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn usage_and_missing_files_exit_one() {
    assert_eq!(linvar(&["classify"]).status.code(), Some(1));
    assert_eq!(linvar(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        linvar(&["classify", "/nonexistent/x.thy"]).status.code(),
        Some(1)
    );
    assert_eq!(
        linvar(&["models", "preset:maltsev", "--min", "3", "--max", "2"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(linvar(&["--help"]).status.code(), Some(0));
}

#[test]
fn bounded_search_exhaustion_exits_two() {
    let o = linvar(&["entail", "preset:semilattice", "m(x,m(x,y)) = x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).starts_with("unknown"));
}

#[test]
fn json_report_is_written() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("report.json");
    let o = linvar(&["classify", "preset:maltsev", "--json", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["exit_code"], 0);
    assert_eq!(v["command"][0], "classify");
    assert_eq!(v["result"]["theory"], "maltsev");
    assert_eq!(v["result"]["verdicts"]["cm"]["answer"], "yes");
    assert!(v["result"]["traces"].is_array());
    assert_eq!(v["bounds"]["budget"], 8);
}

#[test]
fn budget_comes_from_flag_or_environment() {
    let run = |env: Option<&str>, args: &[&str]| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_linvar"));
        c.args(args).env_remove("LINVAR_BUDGET");
        if let Some(b) = env {
            c.env("LINVAR_BUDGET", b);
        }
        c.output().unwrap()
    };
    let o = run(Some("2"), &["derive", "preset:maltsev"]);
    assert_eq!(
        o.status.code(),
        Some(1),
        "budget 2 is too small for a ternary symbol"
    );
    assert!(stderr(&o).contains("budget"), "{}", stderr(&o));
    let o = run(Some("2"), &["derive", "preset:maltsev", "--budget", "6"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = TempDir::new().unwrap();
    let result = |n: &str| {
        let out = dir.path().join(format!("r{n}.json"));
        let o = linvar(&[
            "classify",
            "preset:jonsson3",
            "--threads",
            n,
            "--json",
            s(&out),
        ]);
        assert_eq!(o.status.code(), Some(0));
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        v["result"].clone()
    };
    assert_eq!(result("1"), result("3"));
}

#[test]
fn derive_iterates_to_inconsistency() {
    let o = linvar(&["derive", "preset:maltsev", "--iterate", "--order"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(
        out.contains("# stage 1") && out.contains("inconsistent"),
        "{out}"
    );
    assert!(out.contains("theory maltsev+"));
}

#[test]
fn join_checks_decomposition() {
    let o = linvar(&[
        "join",
        "preset:maltsev",
        "preset:semilattice",
        "--check-decomposition",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("op p/3") && out.contains("op m/2"));
    assert!(!out.contains("VIOLATED") && !out.contains("DOES NOT"));
}

const HAND: &str = r#"{
  "theory": "maltsev+semilattice",
  "terms": ["p(x,y,y)", "p(x,m(y,y),y)", "p(x,m(y,y),m(y,y))", "x"],
  "steps": [
    {"eq": "m(v,v) = v", "dir": "rev", "pos": [2], "subst": {"v": "y"}},
    {"eq": "m(v,v) = v", "dir": "rev", "pos": [3], "subst": {"v": "y"}},
    {"eq": "p(v,w,w) = v", "dir": "fwd", "pos": [], "subst": {"v": "x", "w": "m(y,y)"}}
  ]
}"#;

#[test]
fn project_and_check_derivations() {
    let dir = TempDir::new().unwrap();
    let d = write(dir.path(), "d.json", HAND);
    let o = linvar(&["project", "preset:maltsev", "preset:semilattice", s(&d)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(
        stdout(&o).starts_with("projected onto maltsev (1 steps); verified"),
        "{}",
        stdout(&o)
    );

    let j = dir.path().join("join.thy");
    let o = linvar(&["join", "preset:maltsev", "preset:semilattice"]);
    std::fs::write(&j, stdout(&o)).unwrap();
    let o = linvar(&["check-derivation", s(&j), s(&d)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let broken = write(
        dir.path(),
        "broken.json",
        &HAND.replace("\"pos\": [3]", "\"pos\": [1]"),
    );
    let o = linvar(&["check-derivation", s(&j), s(&broken)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("invalid"), "{}", stderr(&o));
}

#[test]
fn models_finds_and_exhausts() {
    let o = linvar(&["models", "preset:semilattice", "--min", "2", "--max", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("model of size 2"));
    let o = linvar(&["models", "preset:maltsev", "--refute", "x = y"]);
    assert_eq!(o.status.code(), Some(0));
    let prime = linvar(&["derive", "preset:maltsev"]);
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "prime.thy", &stdout(&prime));
    let o = linvar(&["models", s(&p), "--refute", "x = y"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "no model of size 2 to 3");
}
