use std::process::Command;

fn uavnet() -> Command {
    Command::new(env!("CARGO_BIN_EXE_uavnet"))
}

#[test]
fn unknown_config_key_exits_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"scenario": {"uav": 3}}"#).unwrap();
    let out = uavnet().args(["train", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario.uav"));
}

#[test]
fn missing_checkpoints_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = uavnet().args(["eval", "--episodes", "1", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn train_then_eval_then_compare() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"training": {"horizon": 5, "batch_size": 4, "actor_hidden": [8], "critic_hidden": [8]},
            "compare": {"horizon": 30}}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("run");
    let status = uavnet()
        .args(["train", "--episodes", "2", "--seed", "9", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    for f in ["metrics.csv", "episodes.csv", "summary.json", "trajectories.jsonl", "checkpoints/agent_2.bin"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let status = uavnet().args(["eval", "--episodes", "1", "--config"]).arg(&cfg).arg("--out").arg(&out_dir).status().unwrap();
    assert!(status.success());
    let status = uavnet()
        .args(["compare", "--policy", "eda_nf", "--policy", "non_cooperative", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .arg("--checkpoints")
        .arg(out_dir.join("checkpoints"))
        .status()
        .unwrap();
    assert!(status.success());
    let c: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("comparison.json")).unwrap()).unwrap();
    assert_eq!(c["policies"].as_array().unwrap().len(), 2);
    assert_eq!(c["pilot"], "actors");
}

#[test]
fn single_policy_compare_is_a_config_error() {
    let out = uavnet().args(["compare", "--policy", "eda_nf"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}
