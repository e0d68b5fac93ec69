use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[sampling]
k = 150

[steering]
kind = "list"
directions = [[20.0, 5.0], [-35.0, 25.0]]

[solver]
n_restarts = 3
"#;

fn pccb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pccb"))
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("cfg.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn sweep_then_stats_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("run");
    let o = pccb(&[
        "sweep",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--threads",
        "2",
        "--seed",
        "5",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "records.csv",
        "stats.json",
        "config.toml",
        "outcomes.jsonl",
        "beampattern_1_pccb.csv",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let records = fs::read_to_string(out.join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 1 + 2 + 2 * 3);
    assert!(records.lines().nth(2).unwrap().contains(",pccb,5,"));
    assert_eq!(
        fs::read_to_string(out.join("outcomes.jsonl"))
            .unwrap()
            .lines()
            .count(),
        6
    );

    let echo = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(echo.contains("base_seed = 5"));

    let again = tmp.path().join("again");
    let o = pccb(&[
        "stats",
        "--config",
        &cfg,
        "--records",
        out.join("records.csv").to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read(out.join("stats.json")).unwrap(),
        fs::read(again.join("stats.json")).unwrap()
    );
}

#[test]
fn steer_and_single_direction() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("steer");
    let o = pccb(&["steer", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let n_patterns = fs::read_dir(&out)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .starts_with("beampattern_")
        })
        .count();
    assert_eq!(n_patterns, 2);

    let out = tmp.path().join("one");
    let o = pccb(&[
        "pccb",
        "--config",
        &cfg,
        "--theta-deg",
        "-15",
        "--phi-deg",
        "40",
        "--restarts",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let records = fs::read_to_string(out.join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 1 + 1 + 2);
}

#[test]
fn validation_failures_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    let out = out.to_str().unwrap();
    let cases = [
        "unknown_key = 3",
        "[solver]\nstep_tol = -1.0",
        "[sampling]\nk = 2",
        "[array]\nkind = \"grid\"\nn_y = 0\nn_z = 3\nspacing_m = 0.07",
        "not toml at all ===",
    ];
    for text in cases {
        let cfg = write_config(tmp.path(), text);
        let o = pccb(&["steer", "--config", &cfg, "--out", out]);
        assert!(!o.status.success(), "accepted: {text}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    }
    assert!(!pccb(&["sweep", "--restarts", "0", "--out", out])
        .status
        .success());
    assert!(!pccb(&["steer", "--config", "/nonexistent/cfg.toml"])
        .status
        .success());
    assert!(!pccb(&[
        "stats",
        "--records",
        "/nonexistent/records.csv",
        "--out",
        out
    ])
    .status
    .success());
    assert!(!pccb(&["bogus"]).status.success());
}
