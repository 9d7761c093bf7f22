use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"{
    "ranges": {
        "r_x": {"lo": -15000, "hi": -5000, "count": 3},
        "r_z": {"lo": 0, "hi": 30000, "count": 3},
        "v_x": {"lo": 2500, "hi": 3500, "count": 2},
        "r_tc_x": {"lo": 5000, "hi": 15000, "count": 2},
        "r_tc_z": {"lo": 0, "hi": 30000, "count": 3},
        "v_tc_x": {"lo": -2500, "hi": 3500, "count": 2}
    },
    "train": {"classifier_epochs": 3, "regressor_epochs": 3},
    "eval": {"sizes": [2], "count": 2, "gains": [5]}
}"#;

fn intercept(dir: &Path, args: &[&str]) -> Output {
    let config = dir.join("config.json");
    if !config.exists() {
        std::fs::write(&config, TINY).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_intercept"))
        .arg("--config")
        .arg(&config)
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = intercept(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn stationary_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--seed", "1", "datagen"]);
    for f in ["stationary_full.csv", "stationary_train.csv", "stationary_test.csv", "stationary_manifest.json"] {
        assert!(d.join(f).exists(), "{f}");
    }
    let header = std::fs::read_to_string(d.join("stationary_train.csv")).unwrap();
    assert!(header.starts_with("rx,rz,vx,rtz,feasible,t_intercept\n"));

    let stdout = ok(d, &["--seed", "1", "train"]);
    assert!(stdout.contains("test accuracy"));
    assert!(d.join("model.json").exists() && d.join("metrics.json").exists());

    ok(d, &["--seed", "2", "solve", "--n", "2"]);
    for f in ["engagement.json", "cost_true.csv", "cost_approx.csv", "solve.json", "solve.svg"] {
        assert!(d.join(f).exists(), "{f}");
    }

    let stdout = ok(d, &["--seed", "3", "eval"]);
    assert!(stdout.contains("stationary 2x2"));
    let csv = std::fs::read_to_string(d.join("eval.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(d.join("eval.json").exists());

    ok(d, &["plot", "--input", d.join("engagement.json").to_str().unwrap()]);
    let svg = std::fs::read_to_string(d.join("plot.svg")).unwrap();
    assert_eq!(svg.matches(r#"<polyline class="pursuer""#).count(), 2);
}

#[test]
fn maneuvering_robustness() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["datagen", "--class", "maneuvering"]);
    ok(d, &["train", "--class", "maneuvering"]);
    let stdout = ok(d, &["robust", "--n", "2"]);
    assert!(stdout.contains("gain 3") && stdout.contains("gain 5"));
    let csv = std::fs::read_to_string(d.join("robust.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn datagen_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(a.path(), &["--seed", "5", "datagen"]);
    ok(b.path(), &["--seed", "5", "datagen"]);
    for f in ["stationary_train.csv", "stationary_test.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap()
        );
    }
}

#[test]
fn failures_exit_nonzero_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = intercept(d, &["eval"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.json"));

    std::fs::write(d.join("config.json"), r#"{"workers": 0}"#).unwrap();
    let out = intercept(d, &["solve"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("workers"));

    let out = intercept(d, &["robust", "--bogus"]);
    assert!(!out.status.success());
}

#[test]
fn robust_rejects_stationary_model() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["datagen"]);
    ok(d, &["train"]);
    let out = intercept(d, &["robust"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("expected maneuvering"));
}
