use std::path::Path;
use std::process::{Command, Output};

fn pair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pair"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("sweep.json");
    std::fs::write(
        &path,
        r#"{
  "schema_version": 1,
  "kind": "ct_rank_sweep",
  "seed": 3,
  "ct": { "image_size": 16, "n_angles": 8, "n_detectors": 23 },
  "noise": { "mode": "relative_norm", "level": 0.05 },
  "counts": { "unpaired_b": 120, "unpaired_x": 100, "paired": 100, "test": 20 },
  "ranks": [10, 20]
}"#,
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn rank_sweep_save_and_info() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let run = tmp.path().join("run");
    let out = pair(&[
        "rank-sweep",
        "--config",
        &config,
        "--out",
        run.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("rank  pair_inverse  tsvd_inverse"));
    assert_eq!(
        stdout
            .lines()
            .filter(|l| l.trim_start().starts_with(char::is_numeric))
            .count(),
        2
    );

    let model = tmp.path().join("model");
    let out = pair(&[
        "save",
        "--config",
        &config,
        "--rank",
        "10",
        "--out",
        model.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = pair(&["info", model.to_str().unwrap()]);
    assert!(out.status.success());
    let manifest: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(manifest["kind"], "linear-pair");
    assert_eq!(manifest["config"]["seed"], 3);
}

#[test]
fn seed_override_changes_the_data() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let run = |seed: &str, name: &str| {
        let dir = tmp.path().join(name);
        let out = pair(&[
            "rank-sweep",
            "--config",
            &config,
            "--seed",
            seed,
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        out.stdout
    };
    assert_eq!(run("4", "a"), run("4", "b"));
    assert_ne!(run("4", "c"), run("5", "d"));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{ "schema_version": 1, "kind": "gen_ct", "seed": 1, "typo": 2 }"#,
    )
    .unwrap();
    let out = pair(&[
        "gen-ct",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("typo"));

    let out = pair(&["info", tmp.path().join("missing").to_str().unwrap()]);
    assert!(!out.status.success());
}
