use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;

fn magnls(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_magnls")).args(args).output().unwrap()
}

fn ndjson(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const FREE: &str = r#"
[grid]
dim = 1
n_axis = 128
half_width = 16.0

[local]
a = [0.0]
beta = [[0.0]]
l = [2.0]

[initial]
kind = "gaussian"
amplitude = [1.0]
width = 1.5
momentum = [1.0]

[evolve]
dt = 0.01
t_end = 1.0
blowup_threshold = 1e6
"#;

const CUBIC_2D: &str = r#"
[grid]
dim = 2
n_axis = 32
half_width = 8.0

[potentials]
v = { kind = "constant", value = 1.0 }

[local]
a = [1.0]
beta = [[0.0]]
l = [2.0]
sign = "focusing"

[initial]
kind = "gaussian"
amplitude = [0.5]
width = 1.0

[evolve]
dt = 0.01
t_end = 0.05
blowup_threshold = 1e6
"#;

#[test]
fn missing_config_is_a_config_error() {
    let out = magnls(&["evolve", "--config", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read"));
}

#[test]
fn free_particle_conserves_energy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FREE);
    let out_dir = dir.path().join("out");
    let out = magnls(&[
        "evolve",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
        "--snapshot-stride",
        "25",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = ndjson(&out);
    assert_eq!(lines.len(), 101);
    for key in ["t", "charge", "E_kin", "E_V", "E_loc", "E_nonloc", "F_A", "H1A_norm"] {
        assert!(lines[0].get(key).is_some(), "missing {key}");
    }
    let f0 = lines[0]["F_A"].as_f64().unwrap();
    let f1 = lines.last().unwrap()["F_A"].as_f64().unwrap();
    assert!((f1 - f0).abs() <= 1e-9, "{f0} {f1}");

    let summary = std::fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    assert!(summary.contains("completed"), "{summary}");
    let snaps = std::fs::read_dir(out_dir.join("snapshots")).unwrap().count();
    assert_eq!(snaps, 5);
    let last = magnls::snapshot::load(out_dir.join("snapshots/step_00000100.bin")).unwrap();
    assert_eq!(last.grid().n_axis(), 128);
    let file_lines = std::fs::read_to_string(out_dir.join("diagnostics.ndjson")).unwrap();
    assert_eq!(file_lines.lines().count(), 101);
}

#[test]
fn picard_override_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CUBIC_2D);
    let out = magnls(&["evolve", "--config", &cfg, "--integrator", "picard"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("picard slabs"));
    assert_eq!(ndjson(&out).len(), 6);
}

#[test]
fn require_global_rejects_critical_power() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CUBIC_2D);
    let out = magnls(&["evolve", "--config", &cfg, "--require-global"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Theorem (solGlobal)") && err.contains("4/N"), "{err}");
    assert!(out.stdout.is_empty());

    let subcritical = CUBIC_2D.replace("l = [2.0]", "l = [1.5]");
    let cfg = write_config(dir.path(), &subcritical);
    let out = magnls(&["evolve", "--config", &cfg, "--require-global"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn violated_condition_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{CUBIC_2D}\n[nonlocal]\nw = [[1.0]]\ngamma = 1.0\nmu = 3.5\n");
    let cfg = write_config(dir.path(), &body);
    let out = magnls(&["evolve", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("(restrh-localwp)"));
}

#[test]
fn groundstate_reproduces_sech() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
[grid]
dim = 1
n_axis = 256
half_width = 20.0

[potentials]
v = { kind = "constant", value = 1.0 }

[local]
a = [1.0]
beta = [[0.0]]
l = [2.0]

[groundstate]
masses = [4.0]
tau = 1e-3
tol = 1e-7
max_iter = 200000
"#;
    let cfg = write_config(dir.path(), body);
    let out_dir = dir.path().join("gs");
    let out = magnls(&["groundstate", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rec = &ndjson(&out)[0];
    assert!(rec["residual"].as_f64().unwrap() <= 1e-6);
    assert!(rec["lambda"][0].as_f64().unwrap().abs() <= 1e-6);

    let u = magnls::snapshot::load(out_dir.join("groundstate.bin")).unwrap();
    let grid = u.grid().clone();
    let c = u.component(0);
    let peak = (0..c.len()).max_by(|&a, &b| c[a].norm().total_cmp(&c[b].norm())).unwrap();
    let x0 = grid.coordinate(peak, 0);
    let err = (0..c.len())
        .map(|i| (c[i].norm() - 2f64.sqrt() / (grid.coordinate(i, 0) - x0).cosh()).abs())
        .fold(0.0, f64::max);
    assert!(err <= 1e-4, "{err}");
}

#[test]
fn verify_default_suite_passes_quickly() {
    let start = Instant::now();
    let out = magnls(&["verify", "--seed", "3"]);
    let elapsed = start.elapsed().as_secs_f64();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(elapsed < 60.0, "{elapsed}");
    let reports = ndjson(&out);
    assert!(reports.len() >= 5);
    assert!(reports.iter().all(|r| r["pass"].as_bool() == Some(true)));
}

#[test]
fn decay_slope_in_one_dimension() {
    let out = magnls(&["decay"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = ndjson(&out);
    assert_eq!(lines.len(), 11);
    let slope = lines.last().unwrap()["slope"].as_f64().unwrap();
    assert!((slope + 0.5).abs() <= 0.05, "{slope}");
}
