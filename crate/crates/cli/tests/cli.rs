use std::path::Path;
use std::process::{Command, Output};

fn hpband(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_hpband"))
        .args(args)
        .output()
        .expect("spawn hpband");
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("run.json");
    let json = format!(
        r#"{{"L": 3, "nMax": 4, "grid": 20, "outputDir": "{}",
            "provider": {{"kind": "synthetic", "model": {{"type": "crossingLine"}}, "bands": 3}}}}"#,
        dir.join("out").display()
    );
    std::fs::write(&path, json).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn hp_run_writes_log_and_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = hpband(&["hp", "run", "--config", &cfg]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("loop,nElems,nMarked,hMin,N\n"));
    let out_dir = dir.path().join("out");
    let log = std::fs::read_to_string(out_dir.join("loops.csv")).unwrap();
    assert_eq!(log.lines().count(), 5);
    for band in 1..=2 {
        assert!(out_dir.join(format!("interpolant_band_{band}.txt")).exists());
    }
}

#[test]
fn bands_eval_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = hpband(&["bands", "eval", "--config", &cfg, "--k", "0.5", "-0.25"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "band,lambda,omega,domega_dk1,domega_dk2");
    assert_eq!(lines.len(), 4);
    let csv = dir.path().join("sweep.csv");
    hpband(&["bands", "sweep", "--config", &cfg, "--grid", "4", "--out", csv.to_str().unwrap()]);
    let sweep = std::fs::read_to_string(csv).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 10);
    assert!(sweep.starts_with("k1,k2,lambda_1,lambda_2,lambda_3\n"));
}

#[test]
fn study_with_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = hpband(&["study", "run", "--config", &cfg, "--baseline", "uniform-h"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("slope="));
    assert!(text.contains("uniform-h"));
    let out_dir = dir.path().join("out");
    for f in ["study.csv", "baseline_uniform-h.csv", "convergence.svg", "error_heat.svg"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
}

#[test]
fn fekete_single_degree_table() {
    let out = hpband(&["fekete", "compute", "--degree", "4", "--seeds", "2"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.starts_with("4 ")));
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\"L\": 1}").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hpband"))
        .args(["hp", "run", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
}
