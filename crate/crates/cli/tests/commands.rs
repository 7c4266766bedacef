use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;
use stormleg_core::eval::report::normalize;

const S02: &str = "What category was Hurricane Michael when it made landfall in Florida in 2018?";

/// Runs the binary inside `dir` with a config that keeps ledger and reports there.
fn stormleg(dir: &Path, args: &[&str], stdin: Option<&str>) -> Output {
    let cfg = dir.join("stormleg.toml");
    if !cfg.exists() {
        std::fs::write(&cfg, "ledger_dir = \"ledger\"\nout_dir = \"reports\"\n").unwrap();
    }
    let mut child = Command::new(env!("CARGO_BIN_EXE_stormleg"))
        .args(args)
        .current_dir(dir)
        .env("STORMLEG_CONFIG", &cfg)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut pipe = child.stdin.take().unwrap();
    pipe.write_all(stdin.unwrap_or("").as_bytes()).unwrap();
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "exit {:?}\n{}", o.status, String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn traces(dir: &Path) -> Vec<String> {
    match std::fs::read_dir(dir.join("ledger")) {
        Ok(rd) => rd
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".jsonl") && n != "index.jsonl" && n != "sessions.jsonl")
            .map(|n| n.trim_end_matches(".jsonl").to_string())
            .collect(),
        Err(_) => Vec::new(),
    }
}

#[test]
fn scripted_run_answers_and_writes_the_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&stormleg(dir.path(), &["run", S02, "--scripted", "s02"], None));
    assert!(out.contains("Category 5"), "{out}");
    let ids = traces(dir.path());
    assert_eq!(ids.len(), 1);
    assert!(out.contains(&ids[0]));

    let errors = stdout(&stormleg(dir.path(), &["--json", "trace", &ids[0], "--outcome", "error"], None));
    assert_eq!(serde_json::from_str::<Value>(&errors).unwrap(), Value::Array(vec![]));
    let all: Value = serde_json::from_str(&stdout(&stormleg(dir.path(), &["--json", "trace", &ids[0]], None))).unwrap();
    assert_eq!(all.as_array().unwrap().len(), 2);
    let export = stdout(&stormleg(dir.path(), &["trace", &ids[0], "--export"], None));
    assert_eq!(export.lines().count(), 1 + 1 + 2 + 2, "header, open, two calls, two node annotations");
}

#[test]
fn interactive_run_executes_only_after_approve() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&stormleg(dir.path(), &["run", S02, "--scripted", "S02", "--interactive"], Some("abort\n")));
    assert!(out.contains("nothing executed"));
    assert!(traces(dir.path()).is_empty());

    let out = stdout(&stormleg(dir.path(), &["run", S02, "--scripted", "S02", "--interactive"], Some("")));
    assert!(out.contains("aborting"));
    assert!(traces(dir.path()).is_empty());

    let out = stdout(&stormleg(dir.path(), &["run", S02, "--scripted", "S02", "--interactive"], Some("maybe\napprove\n")));
    assert!(out.contains("unrecognized command"));
    assert!(out.contains("Category 5"));
    assert_eq!(traces(dir.path()).len(), 1);
}

#[test]
fn ablation_reports_the_fixed_graph_topology_drop() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&stormleg(dir.path(), &["--json", "ablate", "subset7", "--scripted", "full"], None));
    let v: Value = serde_json::from_str(&out).unwrap();
    let fixed = v["variants"].as_array().unwrap().iter().find(|r| r["variant"] == "fixed_graph").unwrap();
    let delta = fixed["delta"]["topology_selection"].as_f64().unwrap();
    assert!((delta - -28.6).abs() < 0.05, "{delta}");
    let md = std::fs::read_to_string(dir.path().join("reports/ablation.md")).unwrap();
    assert!(md.contains("| Topology Selection | 100.0 | 71.4 | -28.6 |"), "{md}");
    assert!(dir.path().join("reports/ablation.json").is_file());
}

#[test]
fn bench_reports_are_stable_modulo_volatile_fields() {
    let dir = tempfile::tempdir().unwrap();
    let read = || {
        stdout(&stormleg(dir.path(), &["bench", "subset7", "--scripted"], None));
        let mut v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("reports/bench_full.json")).unwrap()).unwrap();
        normalize(&mut v);
        (v, std::fs::read_to_string(dir.path().join("reports/bench_full.md")).unwrap())
    };
    let (first_json, first_md) = read();
    let (second_json, second_md) = read();
    assert_eq!(first_json, second_json);
    assert_eq!(first_json["errors"], 0);
    assert!(first_md.contains("Factual Precision"));
    // Timings sit on their own lines in the markdown.
    let strip = |s: &str| {
        s.lines()
            .filter(|l| !l.starts_with("Wall-clock") && !l.starts_with("| Avg. Latency"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&first_md), strip(&second_md));
}

#[test]
fn plan_prints_diagram_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&stormleg(dir.path(), &["plan", "anything", "--scripted", "s02", "--variant", "fixed_graph"], None));
    assert!(out.contains("[noaa_coops, usgs]") && out.contains("6 nodes"));
    let json: Value = serde_json::from_str(&stdout(&stormleg(dir.path(), &["--json", "plan", S02, "--scripted", "s02"], None))).unwrap();
    assert_eq!(json["plan"]["topology"], "linear");
}

#[test]
fn stress_and_reference_commands_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&stormleg(dir.path(), &["--json", "stress", "topology", "--inject-faults", "--scripted"], None));
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["correct"], 32);
    let out = stdout(&stormleg(dir.path(), &["stress", "fault", "--scripted"], None));
    assert!(dir.path().join("reports/stress_fault.md").is_file(), "{out}");
    let out = stdout(&stormleg(dir.path(), &["reference"], None));
    assert!(out.contains("| Linear NHC→N+U | 85.05 | 85.0 |"), "{out}");
}

#[test]
fn errors_exit_non_zero_without_panicking() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["bench", "Z99"],
        vec!["run", "an unscripted question"],
        vec!["run", S02, "--scripted", "s02", "--fault", "graph_architect"],
        vec!["trace", "no-such-trace"],
        vec!["stress", "sideways"],
    ] {
        let o = stormleg(dir.path(), &args, None);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!String::from_utf8_lossy(&o.stderr).contains("panicked"), "{args:?}");
    }
    std::fs::write(dir.path().join("stormleg.toml"), "registry = \"missing.json\"\n").unwrap();
    assert_eq!(stormleg(dir.path(), &["reference"], None).status.code(), Some(2));
}

#[test]
fn fault_runs_still_answer() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&stormleg(dir.path(), &["--json", "run", "x", "--scripted", "M01", "--fault", "usgs"], None));
    let v: Value = serde_json::from_str(&out).unwrap();
    assert!(!v["final_text"].as_str().unwrap().is_empty());
    let id = v["trace_id"].as_str().unwrap();
    let errors: Value = serde_json::from_str(&stdout(&stormleg(dir.path(), &["--json", "trace", id, "--outcome", "error"], None))).unwrap();
    assert!(!errors.as_array().unwrap().is_empty());
}
