use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BASE: &str = r#"
[grid]
dim = 2
n = 16

[time]
horizon = 1.0
steps = 40

[initial]
kind = "smooth"
seed = 2
radius = 2.0
amplitude = 1e-2

[[region]]
shape = "strip"
axis = 0
center = 0.5
half_width = 0.25
"#;

const SECOND_STRIP: &str = r#"
[[region]]
shape = "strip"
axis = 1
center = 0.5
half_width = 0.25
"#;

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, format!("{body}\n[output]\ndir = \"out\"\n")).unwrap();
    p
}

fn qls(sub: &str, cfg: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qls")).arg(sub).arg(cfg).output().unwrap()
}

fn out_dir(cfg: &Path, sub: &str) -> PathBuf {
    cfg.parent().unwrap().join("out").join(sub)
}

fn csv_column(path: &Path, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|x| x.unwrap()[idx].to_string()).collect()
}

fn assert_complete(dir: &Path) {
    for f in ["manifest.txt", "config.toml", "checks.csv"] {
        assert!(dir.join(f).exists(), "{f} missing in {}", dir.display());
    }
}

#[test]
fn check_gcc_two_strips_passes() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write_config(t.path(), &format!("{BASE}{SECOND_STRIP}"));
    let o = qls("check-gcc", &cfg);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let d = out_dir(&cfg, "check-gcc");
    assert_complete(&d);
    assert_eq!(csv_column(&d.join("gcc.csv"), "satisfied"), ["true"]);
    let l: f64 = csv_column(&d.join("gcc.csv"), "l_min")[0].parse().unwrap();
    assert!(l.is_finite() && l > 0.0);
}

#[test]
fn check_gcc_single_strip_reports_witness() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write_config(t.path(), BASE);
    let o = qls("check-gcc", &cfg);
    assert_eq!(o.status.code(), Some(4));
    let d = out_dir(&cfg, "check-gcc");
    assert_eq!(csv_column(&d.join("gcc.csv"), "witness_verified"), ["true"]);
    assert!(std::fs::read_to_string(d.join("manifest.txt")).unwrap().contains("status=tolerance"));
}

#[test]
fn diagnose_at_zero_state_passes() {
    let t = tempfile::tempdir().unwrap();
    let body = format!("{BASE}{SECOND_STRIP}").replace("kind = \"smooth\"\nseed = 2\nradius = 2.0\namplitude = 1e-2", "kind = \"zero\"");
    let cfg = write_config(t.path(), &format!("projection = \"nyquist\"\n{body}"));
    let o = qls("diagnose", &cfg);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let d = out_dir(&cfg, "diagnose");
    assert_complete(&d);
    assert!(csv_column(&d.join("checks.csv"), "pass").iter().all(|p| p == "true"));
}

#[test]
fn solve_conserves_mass_and_is_deterministic() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write_config(t.path(), BASE);
    assert_eq!(qls("solve", &cfg).status.code(), Some(0));
    let table = out_dir(&cfg, "solve").join("conservation.csv");
    let drift = csv_column(&table, "mass_drift");
    assert_eq!(drift.len(), 41);
    assert!(drift.iter().all(|v| v.parse::<f64>().unwrap() <= 1e-8));
    let first = std::fs::read(&table).unwrap();
    assert_eq!(qls("solve", &cfg).status.code(), Some(0));
    assert_eq!(std::fs::read(&table).unwrap(), first);
    let f = qls_core::io::read_field(&out_dir(&cfg, "solve").join("final.bin")).unwrap();
    assert_eq!(f.grid().n(), 16);
}

#[test]
fn hum_control_writes_report() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write_config(t.path(), &format!("{BASE}{SECOND_STRIP}"));
    let o = qls("hum-control", &cfg);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = qls_core::io::read_records(&out_dir(&cfg, "hum-control").join("hum_report.txt")).unwrap();
    let get = |k: &str| rep.iter().find(|(a, _)| a == k).unwrap().1.clone();
    assert_eq!(get("converged"), "true");
    assert!(get("terminal_ratio").parse::<f64>().unwrap() <= 1e-6);
}

#[test]
fn nonlinear_control_converges() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write_config(t.path(), &format!("{BASE}{SECOND_STRIP}"));
    let o = qls("nonlinear-control", &cfg);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let d = out_dir(&cfg, "nonlinear-control");
    assert!(csv_column(&d.join("picard.csv"), "iteration").len() >= 2);
}

#[test]
fn missed_tolerance_exits_four() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write_config(t.path(), &format!("{BASE}{SECOND_STRIP}\n[tolerances]\nlinear_terminal = 1e-300\n"));
    let o = qls("hum-control", &cfg);
    assert_eq!(o.status.code(), Some(4));
    let checks = csv_column(&out_dir(&cfg, "hum-control").join("checks.csv"), "pass");
    assert!(checks.contains(&"false".to_string()));
}

#[test]
fn invalid_configs_exit_two() {
    let t = tempfile::tempdir().unwrap();
    for body in [BASE.replace("n = 16", "n = 7"), format!("{BASE}\nbogus = 1\n"), BASE.replace("horizon = 1.0", "horizon = -1.0")] {
        let cfg = write_config(t.path(), &body);
        let o = qls("solve", &cfg);
        assert_eq!(o.status.code(), Some(2));
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains("kind=validation") && err.contains("exit_code=2"), "{err}");
    }
    let o = qls("solve", &t.path().join("missing.toml"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn exact_control_reaches_target() {
    let t = tempfile::tempdir().unwrap();
    let body = format!(
        "{BASE}{SECOND_STRIP}\n[target]\nkind = \"modes\"\nmodes = [{{ k = [1, 0], re = 1e-4 }}, {{ k = [0, -1], re = 0.0, im = 5e-5 }}]\n"
    );
    let cfg = write_config(t.path(), &body);
    let o = qls("exact-control", &cfg);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = qls_core::io::read_records(&out_dir(&cfg, "exact-control").join("verdict.txt")).unwrap();
    let rel: f64 = v.iter().find(|(k, _)| k == "terminal_error_relative").unwrap().1.parse().unwrap();
    assert!(rel <= 1e-4);
}
