use std::path::PathBuf;
use std::process::{Command, Output};

fn corpus(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("corpus")
        .join(file)
}

fn slamjs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slamjs"))
        .args(args)
        .env_remove("SLAMJS_SEED")
        .output()
        .expect("binary runs")
}

fn temp_program(name: &str, src: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("slamjs-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, src).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn eval_prints_value() {
    let o = slamjs(&["eval", corpus("sem1_if.sjs").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "false\n");
}

#[test]
fn eval_stuck_exits_two() {
    let p = temp_program("stuck.sjs", "true(1)");
    let o = slamjs(&["eval", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("ApplyNonFunction"));
}

#[test]
fn eval_fuel_exits_three() {
    let p = temp_program("loop.sjs", "(fun(x){x(x)})(fun(x){x(x)})");
    let o = slamjs(&["eval", "--max-steps", "10", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn parse_error_exits_one() {
    let p = temp_program("bad.sjs", "fun(");
    let o = slamjs(&["eval", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.sjs:"));
    // holes are not source syntax
    let p = temp_program("hole.sjs", "_");
    assert_eq!(slamjs(&["eval", p.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn eval_trace_names_rules() {
    let o = slamjs(&["eval", "--trace", corpus("sem4_marked_if.sjs").to_str().unwrap()]);
    let out = stdout(&o);
    assert!(out.contains("Lift-If"));
    assert!(out.trim_end().ends_with("(H : (L : false))"));
}

#[test]
fn analyze_reports_depends() {
    let run = |file: &str, variant: &str| {
        let o = slamjs(&["analyze", "--variant", variant, corpus(file).to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        stdout(&o)
    };
    assert_eq!(run("ex04_eval_scope.sjs", "improved"), "depends: {L}\n");
    assert_eq!(run("ex09_splice_name.sjs", "simple"), "depends: {L}\n");
    assert_eq!(
        run("ex10_unstaged_records.sjs", "both"),
        "[simple] depends: {H, L}\n[improved] depends: {H, L}\n"
    );
}

#[test]
fn depends_command_matches_analyze() {
    let f = corpus("ex02_church_if.sjs");
    let o = slamjs(&["depends", "--variant", "both", f.to_str().unwrap()]);
    assert_eq!(
        stdout(&o),
        "[simple] depends: {H, I, L}\n[improved] depends: {H, L}\n"
    );
}

#[test]
fn analyze_json_and_dumps() {
    let f = corpus("ex01_branch.sjs");
    let o = slamjs(&[
        "analyze",
        "--json",
        "--dump-cfa",
        "--dump-flows",
        "json",
        f.to_str().unwrap(),
    ]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["depends"], serde_json::json!(["H", "L"]));
    assert!(v["cfa"]["gamma"].is_object());
    assert!(v["flows"]["edges"].as_array().is_some_and(|e| !e.is_empty()));

    let o = slamjs(&["analyze", "--dump-flows", "dot", f.to_str().unwrap()]);
    let out = stdout(&o);
    assert!(out.starts_with("depends: {H, L}\n"));
    assert!(out.contains("digraph"));
}

#[test]
fn corpus_command_passes() {
    let o = slamjs(&["corpus", "--variant", "both"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("27/27 passed"));
}

#[test]
fn proptest_seed_from_env() {
    let run = |env: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_slamjs"));
        c.args(["proptest", "--seed", "1", "--cases", "20", "--json"]);
        match env {
            Some(s) => c.env("SLAMJS_SEED", s),
            None => c.env_remove("SLAMJS_SEED"),
        };
        let o = c.output().unwrap();
        assert_eq!(o.status.code(), Some(0));
        serde_json::from_slice::<serde_json::Value>(&o.stdout).unwrap()
    };
    assert_eq!(run(None)["seed"], 1);
    let v = run(Some("7"));
    assert_eq!(v["seed"], 7);
    assert_eq!(v["terminating"], 20);
    assert_eq!(v["failures"], serde_json::json!([]));
}

#[test]
fn noninterference_command() {
    let o = slamjs(&[
        "noninterference",
        "--trials",
        "10",
        corpus("ex03_box_choice.sjs").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("secure; depends: {L}; 10/10 trials agree"));
}

#[test]
fn help_documents_exit_codes() {
    let o = slamjs(&["--help"]);
    let out = stdout(&o);
    assert!(out.contains("Exit codes:"));
    assert!(out.contains("3  eval: step budget exhausted"));
}
