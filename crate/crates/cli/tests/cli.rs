use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn voi(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voi"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(voi(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(voi(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(voi(dir.path(), &["--reward-scale", "loud", "gen"]).status.code(), Some(1));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"grid_extent": 5}"#).unwrap();
    let out = voi(dir.path(), &["train", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let out = voi(dir.path(), &["gen", "--nodes", "40", "--grid", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    assert!(voi(dir.path(), &["gen", "--case-study"]).status.success());
    let scenario = dir.path().join("scenario.json");
    let text = fs::read_to_string(&scenario).unwrap();
    assert!(text.contains("\"rho\": 0.7"));

    let s = scenario.to_str().unwrap();
    assert!(voi(dir.path(), &["--episodes", "500", "train", s, "--objective", "aoi"]).status.success());
    let table = dir.path().join("qtable.json");
    let t = table.to_str().unwrap();

    // A table trained for the AoI objective cannot drive the VoI policy.
    let out = voi(dir.path(), &["eval", s, "--table", t]);
    assert_eq!(out.status.code(), Some(2));

    let out = voi(dir.path(), &["eval", s, "--policy", "aoi-optimal", "--table", t]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 10);
    assert!(trace.starts_with("t,x,y,direction,scheduled_node,success,"));

    // The table is bound to the scenario it was trained on.
    let other = dir.path().join("other.json");
    assert!(voi(dir.path(), &["--seed", "4", "gen", "--nodes", "3", "--output", "other.json"]).status.success());
    let out = voi(dir.path(), &["eval", other.to_str().unwrap(), "--policy", "aoi-optimal", "--table", t]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn plot_rejects_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("empty.csv");
    fs::write(&csv, "policy,t,mean_voi,min_voi\n").unwrap();
    assert_eq!(voi(dir.path(), &["plot", csv.to_str().unwrap()]).status.code(), Some(2));

    fs::write(&csv, "policy,t,mean_voi,min_voi\nvoi-optimal,1,5,2\nvoi-optimal,2,6,3\n").unwrap();
    assert!(voi(dir.path(), &["plot", csv.to_str().unwrap()]).status.success());
    let svg = fs::read_to_string(dir.path().join("empty.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 1);
}
