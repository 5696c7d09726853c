use proptest::prelude::*;
use serde_json::Value;
use std::process::Command;
use traplab_cli::config::{ExperimentConfig, Kind};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_traplab"))
}

proptest! {
    #[test]
    fn parse_inverts_emit(kind in prop::sample::select(Kind::ALL.to_vec()), seed in any::<u32>(), x in 0.01f64..100.0) {
        let mut cfg = ExperimentConfig::defaults(kind);
        cfg.set("seed", seed.into()).unwrap();
        for key in ["theta", "window.half", "box.side"] {
            if cfg.values.get(key).is_some_and(Value::is_f64) {
                cfg.set(key, x.into()).unwrap();
            }
        }
        let back = ExperimentConfig::parse(&cfg.emit()).unwrap();
        prop_assert_eq!(back.kind, cfg.kind);
        prop_assert_eq!(back.values, cfg.values);
    }
}

#[test]
fn manifest_echoes_every_key() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args([
            "--out",
            dir.path().to_str().unwrap(),
            "--seed",
            "7",
            "emptiness",
            "--set",
            "v=5,10",
        ])
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let m: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("emptiness.manifest.json")).unwrap())
            .unwrap();
    let cfg = m["config"].as_object().unwrap();
    for spec in Kind::Emptiness.schema() {
        assert!(cfg.contains_key(spec.name), "missing {}", spec.name);
    }
    assert_eq!(cfg["seed"], 7);
    assert_eq!(cfg["v"], serde_json::json!([5.0, 10.0]));
    assert!(m["versions"]["traplab"].is_string());
    for f in m["artifacts"].as_array().unwrap() {
        assert!(dir.path().join(f.as_str().unwrap()).exists());
    }
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"kind": "survive", "configs": 3, "t_grid": [1, 2, 4, 8]}"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    let res = bin()
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .args([
            "survive", "--method", "mc", "--paths", "200", "--dt", "0.01",
        ])
        .output()
        .unwrap();
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let csv = std::fs::read_to_string(out.join("survive.csv")).unwrap();
    assert!(csv.starts_with("t,estimate,stderr,method\n"));
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",mc")));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let code = |args: &[&str]| {
        bin()
            .args(["--out", out])
            .args(args)
            .output()
            .unwrap()
            .status
            .code()
    };
    assert_eq!(code(&["eig", "--set", "nope=1"]), Some(2));
    assert_eq!(code(&["eig", "--set", "d=two"]), Some(2));
    assert_eq!(code(&["scaling"]), Some(2));
    assert_eq!(
        code(&[
            "eig",
            "--set",
            "hole_side=0.1",
            "--set",
            "spacing=0.5",
            "--set",
            "grid.h=0.25"
        ]),
        Some(2)
    );
    assert_eq!(
        code(&["eig", "--set", "eig.max_iter=1", "--set", "eig.max_basis=2"]),
        Some(3)
    );
    let nested = dir.path().join("nested.json");
    std::fs::write(&nested, r#"{"kind": "eig", "eig": {"tol": 1e-6}}"#).unwrap();
    assert_eq!(
        code(&["--config", nested.to_str().unwrap(), "eig"]),
        Some(2)
    );
}
