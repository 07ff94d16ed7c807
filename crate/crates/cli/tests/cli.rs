use std::path::Path;
use std::process::{Command, Output};

use convex_trials::experiments::builtin_spec;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_convex-trials"));
    c.env_remove("CONVEX_TRIALS_STATE_CAP");
    c
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn write_instance(dir: &Path, name: &str) {
    let spec = builtin_spec(name).unwrap();
    std::fs::write(dir.join("mdp.json"), serde_json::to_string(spec.mdp.as_ref().unwrap()).unwrap()).unwrap();
    if let Some(o) = &spec.objective {
        std::fs::write(dir.join("objective.json"), serde_json::to_string(o).unwrap()).unwrap();
    }
    if let Some(r) = &spec.risk {
        std::fs::write(dir.join("risk.json"), serde_json::to_string(r).unwrap()).unwrap();
    }
}

fn arg(dir: &Path, file: &str) -> String {
    dir.join(file).to_string_lossy().into_owned()
}

#[test]
fn solve_and_evaluate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_instance(d, "pure_exploration");
    let out = run(bin().args(["solve-finite", "--mdp", &arg(d, "mdp.json"), "--objective", &arg(d, "objective.json")])
        .args(["--out", &arg(d, "dagger.json")]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((summary["optimal_value"].as_f64().unwrap() - 3f64.ln()).abs() < 1e-12);

    let out = run(bin()
        .args(["solve-infinite", "--mdp", &arg(d, "mdp.json"), "--objective", &arg(d, "objective.json")])
        .args(["--out", &arg(d, "star.json"), "--report", &arg(d, "fw.json")]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fw: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("fw.json")).unwrap()).unwrap();
    assert!(fw["final_gap"].as_f64().unwrap() <= 1e-5);

    for (policy, zero_ci) in [("dagger.json", true), ("star.json", false)] {
        let out = run(bin()
            .args(["evaluate", "--mdp", &arg(d, "mdp.json"), "--policy", &arg(d, policy)])
            .args(["--objective", &arg(d, "objective.json"), "--runs", "300", "--seed", "5"])
            .args(["--out", &arg(d, "runs.csv")]));
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let s: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        let ci = s["estimate"]["ci_half_width"].as_f64().unwrap();
        assert_eq!(ci == 0.0, zero_ci);
        let csv = std::fs::read_to_string(d.join("runs.csv")).unwrap();
        assert!(csv.starts_with("run_id,value\n"));
        assert_eq!(csv.lines().count(), 301);
    }
}

#[test]
fn risk_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_instance(d, "risk_averse");
    let out = run(bin()
        .args(["solve-finite", "--mdp", &arg(d, "mdp.json"), "--risk", &arg(d, "risk.json")])
        .args(["--out", &arg(d, "dagger.json")]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(bin()
        .args(["evaluate", "--mdp", &arg(d, "mdp.json"), "--policy", &arg(d, "dagger.json")])
        .args(["--risk", &arg(d, "risk.json"), "--runs", "200", "--out", &arg(d, "r.csv")]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn experiment_outputs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = run(bin().args(["experiment", "--name", "imitation", "--seed", "3", "--out-dir"]).arg(dir.path()));
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["imitation_dagger.csv", "imitation_star.csv", "imitation_summary.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.path().join("imitation_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["spec"]["seed"], 3);
}

#[test]
fn sweep_writes_csv_to_stdout() {
    let out = run(bin().args(["sweep-n", "--spec", "imitation_l2", "--n", "1,2,4", "--runs", "500"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,err,bound,ci_half_width,zeta_dagger,zeta_star,method"));
    assert_eq!(lines.count(), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("slope"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_instance(d, "imitation");

    // missing file
    let out = run(bin().args(["solve-finite", "--mdp", &arg(d, "nope.json"), "--objective", &arg(d, "objective.json")])
        .args(["--out", &arg(d, "p.json")]));
    assert_eq!(out.status.code(), Some(4));

    // invalid transition row
    std::fs::write(
        d.join("bad.json"),
        r#"{"num_states":2,"num_actions":1,"horizon":2,"initial_dist":[1,0],"transition":[[[0.5,0.4]],[[0,1]]]}"#,
    )
    .unwrap();
    let out = run(bin().args(["solve-finite", "--mdp", &arg(d, "bad.json"), "--objective", &arg(d, "objective.json")])
        .args(["--out", &arg(d, "p.json")]));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row sum"));

    // extended MDP over the cap
    let out = run(bin()
        .env("CONVEX_TRIALS_STATE_CAP", "10")
        .args(["solve-finite", "--mdp", &arg(d, "mdp.json"), "--objective", &arg(d, "objective.json")])
        .args(["--out", &arg(d, "p.json")]));
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("too large"));

    let out = run(bin().args(["experiment", "--name", "unknown"]));
    assert_eq!(out.status.code(), Some(2));
}
