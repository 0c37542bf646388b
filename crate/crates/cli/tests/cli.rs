use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use abr_cli::sweep::aggregate;
use serde_json::{json, Value};

fn abr(args: &[&str], out_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_abr"))
        .args(args)
        .env("ABR_OUT_DIR", out_root)
        .current_dir(out_root)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn tiny_run(out_dir: &str) -> Value {
    json!({
        "env": {"kind": "bandit"},
        "dataset": {"behavior": "default", "n": 200, "seed": 3},
        "method": "abr",
        "abr": {"alpha": 0.2, "beta": 1.0, "uniform_samples": 2},
        "td3": {"hidden_sizes": [8], "batch_size": 16, "total_steps": 30, "log_every": 10},
        "eval_episodes": 3,
        "seeds": [4, 5],
        "out_dir": out_dir,
        "reference_episodes": 20
    })
}

fn write(dir: &Path, name: &str, value: &Value) -> String {
    let path = dir.join(name);
    fs::write(&path, value.to_string()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn gen_data_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.jsonl", "b.jsonl"] {
        let out = abr(
            &["gen-data", "--env", "bandit", "--n", "10000", "--seed", "1", "--out", name],
            dir.path(),
        );
        assert_eq!(stdout_json(&out)["transitions"], 10000);
    }
    let read = |n: &str| fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.jsonl"), read("b.jsonl"));
    assert_eq!(read("a.refs.json"), read("b.refs.json"));
}

#[test]
fn gen_data_rejects_bad_behavior() {
    let dir = tempfile::tempdir().unwrap();
    let out = abr(&["gen-data", "--env", "point_mass", "--behavior", "mixture", "--n", "5", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("x").exists());
}

#[test]
fn missing_field_exits_two_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_run("runs");
    cfg.as_object_mut().unwrap().remove("method");
    let path = write(dir.path(), "missing_field.json", &cfg);
    let out = abr(&["train", "--config", &path], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.contains("method"), "{stderr}");
    assert!(!dir.path().join("runs").exists());
}

#[test]
fn runtime_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_run("runs");
    cfg["dataset"] = json!({"path": "does_not_exist.jsonl"});
    let path = write(dir.path(), "cfg.json", &cfg);
    let out = abr(&["train", "--config", &path], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn oracle_check_holds() {
    let dir = tempfile::tempdir().unwrap();
    let out = abr(&["oracle-check", "--problems", "1000", "--seed", "7"], dir.path());
    let report = stdout_json(&out);
    assert_eq!(report["holds"], true);
    assert_eq!(report["problems"], 1000);
    for check in report["checks"].as_array().unwrap() {
        assert_eq!(check["holds"], true, "{check}");
    }
}

#[test]
fn train_writes_reproducible_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let files = ["metrics.csv", "summary.json", "actor.json", "critic1.json", "critic2.json"];
    let mut first = Vec::new();
    for (i, name) in ["one", "two"].iter().enumerate() {
        let path = write(dir.path(), &format!("{name}.json"), &tiny_run(name));
        let summaries = stdout_json(&abr(&["train", "--config", &path], dir.path()));
        assert_eq!(summaries.as_array().unwrap().len(), 2);
        for seed in [4, 5] {
            let seed_dir = dir.path().join(name).join(format!("seed_{seed}"));
            assert!(seed_dir.join("meta.json").exists());
            for f in files {
                let bytes = fs::read(seed_dir.join(f)).unwrap();
                if i == 0 {
                    first.push(bytes);
                } else {
                    let k = (seed - 4) * files.len() + files.iter().position(|x| *x == f).unwrap();
                    assert_eq!(first[k], bytes, "{f} differs for seed {seed}");
                }
            }
        }
    }
    let metrics = fs::read_to_string(dir.path().join("one/seed_4/metrics.csv")).unwrap();
    assert!(metrics.starts_with("step,critic_loss,actor_loss,lambda,q_data,q_uniform,eval_return\n"));
    assert_eq!(metrics.lines().count(), 4);

    let refs = dir.path().join("one/refs.json");
    let report = stdout_json(&abr(
        &[
            "eval",
            "--env",
            "bandit",
            "--actor",
            "one/seed_4/actor.json",
            "--episodes",
            "5",
            "--refs",
            refs.to_str().unwrap(),
        ],
        dir.path(),
    ));
    assert_eq!(report["episodes"], 5);
    assert!(report["normalized_score"].as_f64().unwrap().is_finite());
}

#[test]
fn sweep_aggregates_and_reports_missing_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "base": tiny_run("sw"),
        "grid": {"alpha": [0.1, 0.3], "uniform_samples": [1, 3]},
        "jobs": 2
    });
    let path = write(dir.path(), "sweep.json", &cfg);
    let rows = stdout_json(&abr(&["sweep", "--config", &path], dir.path()));
    assert_eq!(rows.as_array().unwrap().len(), 4);
    let root = dir.path().join("sw");
    let csv = fs::read_to_string(root.join("aggregate.csv")).unwrap();
    assert!(csv.starts_with("method,alpha,beta,uniform_samples,seeds,mean_score,sd_score\n"));
    assert_eq!(csv.lines().count(), 5);
    assert!(root.join("alpha_0.3_beta_1_m_3/seed_5/metrics.csv").exists());

    fs::remove_dir_all(root.join("alpha_0.1_beta_1_m_3/seed_5")).unwrap();
    let err = aggregate(&root).unwrap_err().to_string();
    assert!(err.contains("alpha_0.1_beta_1_m_3/seed_5"), "{err}");
}

#[test]
fn landscape_writes_curves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "n": 300,
        "landscape": {
            "method": "abr",
            "alphas": [0.15],
            "seeds": [0],
            "steps": 20,
            "n_bins": 41,
            "td3": {"hidden_sizes": [8], "batch_size": 32}
        },
        "out_dir": "land"
    });
    let path = write(dir.path(), "land.json", &cfg);
    let rows = stdout_json(&abr(&["landscape", "--config", &path], dir.path()));
    assert_eq!(rows.as_array().unwrap().len(), 1);
    let csv = fs::read_to_string(dir.path().join("land/landscape.csv")).unwrap();
    assert_eq!(csv.lines().count(), 42);
}
