use std::path::Path;
use std::process::{Command, Output};

fn hilo(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_hilo")).args(args).output().expect("binary runs");
    assert!(out.status.success(), "hilo {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn demos_datagen_run_replay() {
    let dir = tempfile::tempdir().unwrap();
    let demos = dir.path().join("demos.jsonl");
    let data = dir.path().join("data.jsonl");
    let log = dir.path().join("run.jsonl");

    hilo(&["demos", "--count", "2", "--seed", "1", "--out", path(&demos)]);
    assert_eq!(std::fs::read_to_string(&demos).unwrap().lines().count(), 4);

    hilo(&["datagen", "--demos", path(&demos), "--out", path(&data), "--per-segment", "2", "--seed", "3"]);
    let lines = std::fs::read_to_string(&data).unwrap();
    assert!(lines.lines().count() > 10);
    for l in lines.lines() {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        assert!(v["user_prompt"].is_string());
    }

    let out = hilo(&[
        "run",
        "--task",
        "table_bussing",
        "--prompt",
        "clean up only the trash",
        "--interject",
        "2.5:that's not trash",
        "--seed",
        "4",
        "--log",
        path(&log),
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("gaps=0"), "{text}");

    let frames = String::from_utf8(hilo(&["replay", "--log", path(&log)]).stdout).unwrap();
    assert!(frames.lines().next().unwrap().contains("\"state_update\""));
    assert!(frames.lines().last().unwrap().contains("\"metrics\""));
}

#[test]
fn suites_export_and_bench() {
    let dir = tempfile::tempdir().unwrap();
    let out = String::from_utf8(hilo(&["export-suites", "--dir", path(dir.path())]).stdout).unwrap();
    let first = out.lines().find(|l| l.contains("constrained_bussing")).expect("bussing suite exported");

    let report = dir.path().join("report.json");
    let table = hilo(&[
        "bench",
        "--suite",
        first,
        "--policies",
        "reference,flat",
        "--trials",
        "3",
        "--out",
        path(&report),
    ]);
    let table = String::from_utf8(table.stdout).unwrap();
    assert!(table.contains("flat_passthrough"), "{table}");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["trials_per_cell"], 3);
    assert_eq!(v["cells"].as_array().unwrap().len(), 2);
}

#[test]
fn bad_arguments_fail() {
    let out = Command::new(env!("CARGO_BIN_EXE_hilo")).args(["run", "--policy", "psychic"]).output().unwrap();
    assert!(!out.status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_hilo")).args(["bench"]).output().unwrap();
    assert!(!out.status.success());
}
