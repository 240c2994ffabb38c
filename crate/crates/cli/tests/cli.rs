use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use antago_core::harness::CSV_HEADER;

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_antago-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_cfg(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn openloop_writes_header_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "ol.cfg", "openloop.duration_s = 1.0\n");
    let out = tmp.path().join("run");
    let o = sim(&["openloop", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("episode.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    assert_eq!(lines.count(), 201);
    let s = summary(&out);
    assert_eq!(s["mode"], "openloop");
    assert!(s["openloop_range_deg"].is_array());
}

#[test]
fn train_then_selfsense_with_saved_model() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "short.cfg",
        "trajectory.cycles = 1\nestimator.trajectories = star\n",
    );
    let train = tmp.path().join("train");
    let o = sim(&["train", "--config", &cfg, "--out", train.to_str().unwrap(), "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let model = train.join("model.json");
    let s = summary(&train);
    assert!(s["estimator"]["r2"][0].as_f64().unwrap() > 0.95);
    assert_eq!(s["seed"], 3);

    let ss = tmp.path().join("ss");
    let o = sim(&[
        "selfsense",
        "--config",
        &cfg,
        "--model",
        model.to_str().unwrap(),
        "--preset",
        "star_ss",
        "--out",
        ss.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&ss);
    assert_eq!(s["feedback"], "self_sensing");
    assert_eq!(s["config"]["trajectory"]["kind"], "star");
    assert!(s["rmse_task_mm"].as_f64().unwrap().is_finite());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "bm.cfg", "trajectory.cycles = 1\n");
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let o = sim(&["benchmark", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "11"]);
        assert!(o.status.success());
        outputs.push((fs::read(out.join("episode.csv")).unwrap(), fs::read(out.join("summary.json")).unwrap()));
    }
    assert!(outputs[0] == outputs[1]);
}

#[test]
fn config_problems_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();
    let bad_key = write_cfg(tmp.path(), "k.cfg", "# comment\nnot.a.key = 1\n");
    let bad_value = write_cfg(tmp.path(), "v.cfg", "control.rate_hz = fast\n");
    let empty = write_cfg(tmp.path(), "e.cfg", "");
    let garbage_model = write_cfg(tmp.path(), "m.json", "{\"degree\": 3}");

    for args in [
        vec!["benchmark", "--config", bad_key.as_str(), "--out", out],
        vec!["benchmark", "--config", bad_value.as_str(), "--out", out],
        vec!["benchmark", "--config", "/nonexistent/cfg", "--out", out],
        vec!["selfsense", "--config", empty.as_str(), "--out", out],
        vec!["selfsense", "--config", empty.as_str(), "--model", garbage_model.as_str(), "--out", out],
        vec!["dance", "--config", empty.as_str()],
    ] {
        let o = sim(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = sim(&["benchmark", "--config", bad_key.as_str(), "--out", out]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn diverging_plant_exits_with_3_and_keeps_partial_log() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "u.cfg", "plant.damping = 1e-9\n");
    let out = tmp.path().join("o");
    let o = sim(&["benchmark", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("episode.csv")).unwrap();
    assert!(csv.starts_with(CSV_HEADER));
    assert!(csv.lines().count() > 1);
    assert!(!out.join("summary.json").exists());
}
