use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use wdscale::experiment::{ExperimentConfig, Manifest, MANIFEST, SUMMARY};

fn wdscale(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wdscale"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &[&str] = &["--widths", "16,32", "--steps", "120", "--jobs", "2"];

fn with_small<'a>(head: &[&'a str], out: &'a str) -> Vec<&'a str> {
    let mut v = head.to_vec();
    v.extend_from_slice(SMALL);
    v.extend_from_slice(&["--out", out]);
    v
}

#[test]
fn plan_prints_width_scaled_decay() {
    let out = wdscale(&["plan", "--widths", "256,512"]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let lambda = |i: usize| {
        doc["entries"][i]["plan"]["matrix"]["lambda"]
            .as_f64()
            .unwrap()
    };
    assert_eq!(lambda(0), 0.1);
    assert!((lambda(1) / lambda(0) - 2f64.sqrt()).abs() < 1e-15);
    assert_eq!(
        doc["entries"][1]["mup"]["matrix"]["lambda"].as_f64(),
        Some(0.1)
    );
}

#[test]
fn proxy_mode_requires_proxy_width() {
    let out = wdscale(&["plan", "--mode", "proxy"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--proxy-width"));
    let ok = wdscale(&[
        "plan",
        "--mode",
        "proxy",
        "--proxy-width",
        "256",
        "--widths",
        "1024",
    ]);
    assert!(ok.status.success());
}

#[test]
fn run_is_byte_identical_and_scales_decay() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = wdscale(&with_small(&["run"], path_str(dir)));
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let mut compared = 0;
    for entry in fs::read_dir(&a).unwrap() {
        let run = entry.unwrap().path();
        if !run.is_dir() {
            continue;
        }
        for f in fs::read_dir(&run).unwrap() {
            let f = f.unwrap().path();
            let twin = b
                .join(run.file_name().unwrap())
                .join(f.file_name().unwrap());
            assert_eq!(
                fs::read(&f).unwrap(),
                fs::read(&twin).unwrap(),
                "{}",
                f.display()
            );
            compared += 1;
        }
    }
    assert_eq!(compared, 8);
    assert_eq!(
        fs::read(a.join(SUMMARY)).unwrap(),
        fs::read(b.join(SUMMARY)).unwrap()
    );

    let lambda = |d: usize| {
        let m =
            Manifest::load(&a.join(format!("d{d}_eta0.001_lam0.1_p0.5")).join(MANIFEST)).unwrap();
        m.spec.adamw.weight_decay
    };
    assert!((lambda(32) / lambda(16) - 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn sweep_covers_the_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("grid");
    let out = wdscale(&with_small(
        &["sweep", "--eta-base", "0.001,0.002", "--p", "0,0.5"],
        path_str(&out_dir),
    ));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = fs::read_to_string(out_dir.join(SUMMARY)).unwrap();
    assert_eq!(summary.lines().count(), 9);
    assert!(summary.lines().skip(1).all(|l| l.contains(",ok,")));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("8 cells"));

    let analyzed = wdscale(&["analyze", path_str(&out_dir)]);
    assert!(analyzed.status.success());
    let text = String::from_utf8_lossy(&analyzed.stdout);
    assert!(text.contains("runs: 8 (0 failed)"));
    assert!(text.contains("alignment"));
    assert!(out_dir.join("fig_spectrum.csv").is_file());
}

#[test]
fn run_rejects_lists() {
    let out = wdscale(&["run", "--p", "0,0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sweep"));
}

#[test]
fn single_step_run_writes_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        widths: vec![4],
        steps: 1,
        record_every: 1,
        spectrum_k: 4,
        out_dir: tmp.path().join("one"),
        ..ExperimentConfig::default()
    };
    let path = tmp.path().join("cfg.json");
    fs::write(&path, cfg.to_json()).unwrap();
    let out = wdscale(&["run", "--config", path_str(&path)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = cfg.out_dir.join("d4_eta0.001_lam0.1_p0.5");
    for name in [MANIFEST, "trajectory.csv", "gains.csv", "spectrum.csv"] {
        assert!(run.join(name).is_file(), "{name}");
    }
    let traj = fs::read_to_string(run.join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().count(), 2);
}

#[test]
fn analyze_names_empty_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = wdscale(&["analyze", path_str(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(path_str(tmp.path())), "{err}");
    assert!(err.contains("manifest.json"));
}

#[test]
fn config_file_round_trips_and_rejects_unknown_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        widths: vec![8],
        steps: 20,
        spectrum_k: 4,
        seed: 5,
        out_dir: tmp.path().join("from_config"),
        ..ExperimentConfig::default()
    };
    let path = tmp.path().join("cfg.json");
    fs::write(&path, cfg.to_json()).unwrap();
    assert_eq!(ExperimentConfig::load(&path).unwrap(), cfg);
    let out = wdscale(&["run", "--config", path_str(&path)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(cfg
        .out_dir
        .join("d8_eta0.001_lam0.1_p0.5")
        .join(MANIFEST)
        .is_file());

    fs::write(&path, r#"{"steps": 20, "learning_rate": 1.0}"#).unwrap();
    let out = wdscale(&["run", "--config", path_str(&path)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
}

#[test]
fn diverging_run_exits_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("boom");
    let out = wdscale(&[
        "run",
        "--widths",
        "8",
        "--steps",
        "50",
        "--eta-base",
        "1e200",
        "--out",
        path_str(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let summary = fs::read_to_string(out_dir.join(SUMMARY)).unwrap();
    assert!(!summary.contains(",ok,"));
}
