use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_switchsynth"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn lists_systems() {
    let o = run(&["systems"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for id in ["thermostat", "oil-pump-cost1", "buck-boost"] {
        assert!(text.lines().any(|l| l == id));
    }
}

#[test]
fn evaluate_reports_value_and_reduced_sequence() {
    let o = run(&[
        "evaluate",
        "--system",
        "thermostat",
        "--init",
        "OFF:22,16",
        "--schedule",
        "5.08,5.32,5.32,6.97,7.23,7.23,4.87,8.66",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("reduced modes: OFF,HEAT,OFF,HEAT,OFF"), "{text}");
    let f: f64 = text.lines().next().unwrap().trim_start_matches("F = ").parse().unwrap();
    assert!(f.is_finite() && f < 2000.0);
}

#[test]
fn bad_input_exits_with_code_2() {
    assert_eq!(run(&["evaluate", "--system", "thermostat", "--schedule", "1,2"]).status.code(), Some(2));
    assert_eq!(run(&["export", "--system", "no-such-system"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[modes]\nnames = [\"A\"]\n[dynamics]\nvariables = [\"x\"]\n[dynamics.flow.A]\nx = \"x +* 2\"\n[metric]\npenalties = [\"p\"]\nrewards = [\"r\"]\n").unwrap();
    assert_eq!(run(&["export", "--config", path(&cfg)]).status.code(), Some(2));
}

#[test]
fn exported_config_reloads_with_same_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("thermostat.toml");
    assert!(run(&["export", "--system", "thermostat", "--out", path(&cfg)]).status.success());
    let sched = "5.08,5.32,5.32,6.97,7.23,7.23,4.87,8.66";
    let a = run(&["evaluate", "--system", "thermostat", "--init", "OFF:22,16", "--schedule", sched]);
    let b = run(&["evaluate", "--config", path(&cfg), "--init", "OFF:22,16", "--schedule", sched]);
    let fa: f64 = stdout(&a).lines().next().unwrap()[4..].parse().unwrap();
    let fb: f64 = stdout(&b).lines().next().unwrap()[4..].parse().unwrap();
    assert!((fa - fb).abs() <= 1e-9 * fa.abs());

    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for (src, out) in [(["--system", "thermostat"], &out_a), (["--config", path(&cfg)], &out_b)] {
        let o = run(&["simulate", src[0], src[1], "--reference", "--init", "OFF:22,16", "--out", path(out)]);
        // the reference guards need the built-in system
        if src[0] == "--config" {
            assert_eq!(o.status.code(), Some(2));
        } else {
            assert!(o.status.success());
        }
    }
    let o = run(&["simulate", "--config", path(&cfg), "--modes", "OFF,HEAT,OFF", "--times", "1,3", "--init", "OFF:22,16", "--out", path(&out_b)]);
    assert!(o.status.success());
    let ca: Value = serde_json::from_str(&fs::read_to_string(out_a.join("cost.json")).unwrap()).unwrap();
    let cb: Value = serde_json::from_str(&fs::read_to_string(out_b.join("cost.json")).unwrap()).unwrap();
    assert_eq!(ca["config_sha256"], cb["config_sha256"]);
}

#[test]
fn synthesize_is_reproducible_and_guards_replay() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&[
            "synthesize", "--system", "thermostat", "--max-inits", "2", "--restarts", "6", "--seed", "9",
            "--no-timestamp", "--out", path(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["guards.json", "optima.csv", "trajectory_000.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let guards: Value = serde_json::from_str(&fs::read_to_string(a.join("guards.json")).unwrap()).unwrap();
    let hash = guards["config_sha256"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    assert!(guards.get("generated_at").is_none());
    let optima = fs::read_to_string(a.join("optima.csv")).unwrap();
    assert!(optima.starts_with(&format!("# system=thermostat config_sha256={hash} seed=9")));
    assert_eq!(optima.lines().count(), 2 + 2);

    let sim = dir.path().join("sim");
    let o = run(&[
        "simulate", "--system", "thermostat", "--max-inits", "2", "--restarts", "6", "--guards",
        path(&a.join("guards.json")), "--init", "OFF:22,26", "--format", "json", "--out", path(&sim),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let traj: Value = serde_json::from_str(&fs::read_to_string(sim.join("trajectory.json")).unwrap()).unwrap();
    assert_eq!(traj["config_sha256"], json!(hash));
    assert!(traj["samples"].as_array().is_some_and(|s| !s.is_empty()));
}

#[test]
fn chattering_guards_exit_with_code_5() {
    let dir = tempfile::tempdir().unwrap();
    let always = |from: &str, to: &str| {
        json!({
            "from": from, "to": to, "condition": {}, "theta": [0.0, 0.0], "theta0": 1.0,
            "inequality": "true", "threshold": null, "positives": 1, "negatives": 1,
            "training_error": 0, "updates": 1, "error": null
        })
    };
    let file = json!({
        "system": "thermostat",
        "config_sha256": "",
        "seed": 0,
        "report": {
            "system": "thermostat", "seed": 0, "epsilon": 0.1, "delta": 0.05, "feature_dim": 1,
            "pac_sample_size": 1, "initial_states": 1, "failure_probability": 0.2, "statement": "",
            "guards": [always("OFF", "HEAT"), always("HEAT", "OFF")], "inits": []
        }
    });
    let guards = dir.path().join("guards.json");
    fs::write(&guards, file.to_string()).unwrap();
    let out = dir.path().join("sim");
    let o = run(&["simulate", "--system", "thermostat", "--guards", path(&guards), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(5));
    let cost: Value = serde_json::from_str(&fs::read_to_string(out.join("cost.json")).unwrap()).unwrap();
    assert!(cost["error"].as_str().unwrap().contains("zeno"));
    assert!(out.join("trajectory.csv").exists());
}
