use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn aerotrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aerotrack")).args(args).output().expect("spawn aerotrack")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8")
}

fn sim(dir: &Path, extra: &[&str]) -> serde_json::Value {
    let mut args = vec!["sim", "rotation_only", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = aerotrack(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_str(&stdout(&o)).expect("summary json")
}

#[test]
fn scenario_ls_lists_the_bundled_corpus() {
    let o = aerotrack(&["scenario", "ls"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    for name in ["static_target", "corridor_approach", "occlusion_decoy", "sprint_7ms", "rotation_only", "false_positive_storm"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing from\n{text}");
    }
}

#[test]
fn scenario_describe_prints_complete_json() {
    let o = aerotrack(&["scenario", "describe", "static_target"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["name"], "static_target");
    assert!(v["tracker"]["weights"].is_object());
}

#[test]
fn usage_and_config_errors_exit_with_one() {
    assert_eq!(code(&aerotrack(&["sim"])), 1);
    assert_eq!(code(&aerotrack(&["sim", "no_such_scenario"])), 1);
    assert_eq!(code(&aerotrack(&["track", "x.jsonl", "--prompt", "1"])), 1);
    assert_eq!(code(&aerotrack(&["ablate", "rotation_only", "--grid", "/nonexistent/grid.json"])), 1);

    let tmp = tempfile::tempdir().unwrap();
    let grid = tmp.path().join("grid.json");
    fs::write(&grid, r#"{"rows": [[0, 0, 0]]}"#).unwrap();
    assert_eq!(code(&aerotrack(&["ablate", "rotation_only", "--grid", grid.to_str().unwrap()])), 1);

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"schema": 1, "name": "x"}"#).unwrap();
    assert_eq!(code(&aerotrack(&["sim", bad.to_str().unwrap()])), 1);
}

#[test]
fn runtime_failures_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let log = tmp.path().join("broken.jsonl");
    fs::write(&log, "{\"t\":0,\"kind\":\"det\",\"boxes\":[[1,2,3]]}\n").unwrap();
    assert_eq!(code(&aerotrack(&["track", log.to_str().unwrap(), "--prompt", "1,2"])), 2);
    assert_eq!(code(&aerotrack(&["metrics", tmp.path().to_str().unwrap()])), 2);
}

#[test]
fn sim_is_deterministic_and_honours_the_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    let summary = sim(&a, &[]);
    sim(&b, &[]);
    for f in ["detections.jsonl", "tracker.jsonl", "commands.jsonl", "ground_truth.jsonl", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(summary["metrics"]["tracked_pct"], 100.0);

    let other = sim(&c, &["--seed", "9", "--no-gyro-comp"]);
    assert_eq!(other["seed"], 9);
    assert_ne!(fs::read(a.join("tracker.jsonl")).unwrap(), fs::read(c.join("tracker.jsonl")).unwrap());

    let o = aerotrack(&["metrics", a.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let m: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(m["frames"], summary["metrics"]["frames"]);
    assert_eq!(m["tracked_pct"], summary["metrics"]["tracked_pct"]);
}

#[test]
fn track_locks_onto_a_single_box_and_follows_it() {
    let tmp = tempfile::tempdir().unwrap();
    let log = tmp.path().join("single.jsonl");
    let mut text = String::new();
    for k in 0..30 {
        let t = k as f64 / 60.0;
        text += &format!("{{\"t\":{t},\"kind\":\"gyro\",\"w\":[0,0,0]}}\n");
        let x = 100.0 + k as f64;
        text += &format!("{{\"t\":{t},\"kind\":\"det\",\"boxes\":[[{x},50,20,40]],\"conf\":[0.9],\"desc\":[[1,0,0,0]]}}\n");
    }
    fs::write(&log, text).unwrap();
    let out = tmp.path().join("trace.jsonl");
    let o = aerotrack(&["track", log.to_str().unwrap(), "--prompt", "110,70", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let records: Vec<serde_json::Value> = fs::read_to_string(&out).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 30);
    for (k, r) in records.iter().enumerate() {
        assert_eq!(r["selected"][0], 100.0 + k as f64, "frame {k}: {r}");
    }
}

#[test]
fn ablate_prints_and_writes_the_table() {
    let tmp = tempfile::tempdir().unwrap();
    let grid = tmp.path().join("grid.json");
    fs::write(&grid, r#"{"rows": [[3, 0, 0], [3, 3, 4]], "repetitions": 2}"#).unwrap();
    let out = tmp.path().join("abl");
    let o = aerotrack(&["ablate", "rotation_only", "--grid", grid.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("ablation.json")).unwrap()).unwrap();
    assert_eq!(table["rows"].as_array().unwrap().len(), 4);
    assert_eq!(fs::read_to_string(out.join("ablation.txt")).unwrap(), stdout(&o));

    let seq = aerotrack(&["ablate", "rotation_only", "--grid", grid.to_str().unwrap(), "--sequential"]);
    assert_eq!(stdout(&seq), stdout(&o));
}
