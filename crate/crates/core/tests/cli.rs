//! End-to-end runs of the `uuvlab` binary.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::closed_port_url;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_uuvlab"));
    c.env("RUST_LOG", "warn").env_remove("UUVLAB_LLM_ENDPOINT").env_remove("UUVLAB_LLM_KEY");
    c
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("cfg.json");
    std::fs::write(&p, body).unwrap();
    p
}

const SMALL: &str = r#"{"seed": 3, "ppo": {"total_steps": 2048, "num_envs": 16, "rollout_steps": 32}, "task": {"duration": 3.0}}"#;

fn read_csv(p: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(p).unwrap();
    r.records().map(|x| x.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn dry_run_validates_without_writing() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), SMALL);
    let o = run(&["--config", "cfg.json", "--out", "x", "train", "--dry-run"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("config ok"));
    assert!(!tmp.path().join("x").exists());
}

#[test]
fn config_errors_exit_2_and_name_the_problem() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["--config", "missing.json", "train"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.json"));

    write_config(tmp.path(), r#"{"ppo": {"learning_rate": 1}}"#);
    let o = run(&["--config", "cfg.json", "train", "--dry-run"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning_rate"), "{}", stderr(&o));

    write_config(tmp.path(), r#"{"ppo": {"lr": -1}, "task": {"episodes": 0}}"#);
    let o = run(&["--config", "cfg.json", "eval", "--dry-run"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ppo") && stderr(&o).contains("task.episodes"), "{}", stderr(&o));

    let o = run(&["tune", "--backend", "mock"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mock_script"));
}

#[test]
fn train_eval_replay_round_trip() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), SMALL);
    let o = run(&["--config", "cfg.json", "--out", "t", "--workers", "2", "train", "--plot"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let t = tmp.path().join("t");
    for f in ["curve.csv", "checkpoint.json", "curve.svg", "manifest.json"] {
        assert!(t.join(f).exists(), "{f}");
    }
    let curve = read_csv(&t.join("curve.csv"));
    assert_eq!(curve.len(), 4);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(t.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(manifest["artifacts"].as_array().unwrap().iter().any(|a| a == "checkpoint.json"));

    let o = run(
        &["--config", "cfg.json", "--out", "e", "eval", "--checkpoint", "t/checkpoint.json", "--trace", "--plot"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let e = tmp.path().join("e");
    let metrics = read_csv(&e.join("metrics.csv"));
    // 3 controllers × 2 tasks without RL, plus the A-S-Surface policy on both tasks.
    assert_eq!(metrics.len(), 8);
    assert_eq!(metrics.iter().filter(|r| r[2] == "rl").count(), 2);
    assert!(e.join("plot_assurface_task1_rl_yaw.svg").exists());

    let o = run(&["replay", "e/trace_assurface_task2_rl.csv", "--out", "r"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let replayed = read_csv(&tmp.path().join("r/metrics.csv"));
    let live = metrics.iter().find(|r| r[0] == "assurface" && r[1] == "task2" && r[2] == "rl").unwrap();
    assert_eq!(replayed[0][3..], live[3..]);
    assert!(tmp.path().join("r/plot_yaw.svg").exists());
}

#[test]
fn identical_config_and_seed_give_identical_csvs() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), SMALL);
    for (out, workers) in [("a", "1"), ("b", "2")] {
        let o = run(&["--config", "cfg.json", "--out", out, "--workers", workers, "train", "--trace"], tmp.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["curve.csv", "trace_train.csv", "checkpoint.json"] {
        let a = std::fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn eval_without_checkpoint_is_the_no_rl_arm() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), r#"{"task": {"duration": 2.0, "eval": ["task1"], "controllers": ["assurface"]}}"#);
    let o = run(&["--config", "cfg.json", "--out", "e", "eval"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = read_csv(&tmp.path().join("e/metrics.csv"));
    assert_eq!(m.len(), 1);
    assert_eq!(&m[0][..3], &["assurface", "task1", "norl"]);
}

#[test]
fn mismatched_checkpoint_is_rejected() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), SMALL);
    let o = run(&["--config", "cfg.json", "--out", "t", "train"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let path = tmp.path().join("t/checkpoint.json");
    let mut ck: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    ck["ppo"]["hidden"] = serde_json::json!([32, 32]);
    std::fs::write(tmp.path().join("bad.json"), ck.to_string()).unwrap();
    let o = run(&["--config", "cfg.json", "--out", "e", "eval", "--checkpoint", "bad.json"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("architecture"), "{}", stderr(&o));
    assert!(!tmp.path().join("e").exists());
}

#[test]
fn rule_tuning_reports_every_round() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["--out", "u", "tune", "--rounds", "2", "--plot", "--trace"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rounds = read_csv(&tmp.path().join("u/tuning.csv"));
    assert_eq!(rounds.len(), 3);
    let yaw: Vec<f64> = rounds.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(yaw.windows(2).all(|w| w[1] <= w[0]), "{yaw:?}");
    assert!(!rounds[0][5].is_empty() && !rounds[1][5].is_empty() && rounds[2][5].is_empty());
    for f in ["transcript.json", "metrics.csv", "trace_before.csv", "trace_after.csv", "tuning_mse.svg"] {
        assert!(tmp.path().join("u").join(f).exists(), "{f}");
    }

    let o = run(&["--out", "z", "tune", "--rounds", "0"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(read_csv(&tmp.path().join("z/tuning.csv")).len(), 1);
}

#[test]
fn mock_tuning_follows_the_script() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(
        tmp.path().join("script.json"),
        r#"[{"channel":"pitch","parameter":"zeta2","direction":"increase","scale":2.0,"rationale":"damp"},
            "{\"channel\":\"roll\",\"parameter\":\"alpha\",\"direction\":\"decrease\",\"scale\":0.5,\"rationale\":\"calm\"}"]"#,
    )
    .unwrap();
    write_config(tmp.path(), r#"{"tuner": {"mock_script": "script.json", "scenario": {"window": 2.0}}}"#);
    let o = run(&["--config", "cfg.json", "--out", "m", "tune", "--backend", "mock", "--rounds", "2"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rounds = read_csv(&tmp.path().join("m/tuning.csv"));
    assert_eq!(rounds[0][5], "pitch:zeta2:increase:2");
    assert_eq!(rounds[1][5], "roll:alpha:decrease:0.5");
    let t: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("m/transcript.json")).unwrap()).unwrap();
    assert_eq!(t["backend"], "mock");
    assert_eq!(t["final_controller"]["pitch"]["zeta2"], 4.0);
    assert_eq!(t["final_controller"]["roll"]["alpha"], 0.01);
}

#[test]
fn unreachable_http_backend_falls_back() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), r#"{"tuner": {"scenario": {"window": 2.0, "deadline": 1.0}}}"#);
    let o = bin()
        .args(["--config", "cfg.json", "--out", "h", "tune", "--backend", "http", "--rounds", "1"])
        .env("UUVLAB_LLM_ENDPOINT", closed_port_url())
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let t = std::fs::read_to_string(tmp.path().join("h/transcript.json")).unwrap();
    assert!(t.contains("fallback"), "{t}");

    let o = run(&["--out", "h2", "tune", "--backend", "http"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("UUVLAB_LLM_ENDPOINT"));
}

#[test]
fn replay_errors_name_the_line() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["--out", "u", "tune", "--rounds", "0", "--trace"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(tmp.path().join("u/trace_before.csv")).unwrap();
    let mut lines: Vec<&str> = text.lines().take(6).collect();
    lines.push("0.1,0.2");
    std::fs::write(tmp.path().join("cut.csv"), lines.join("\n")).unwrap();
    let o = run(&["replay", "cut.csv"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 7"), "{}", stderr(&o));

    std::fs::write(tmp.path().join("empty.csv"), "").unwrap();
    let o = run(&["replay", "empty.csv"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no rows"), "{}", stderr(&o));
}
