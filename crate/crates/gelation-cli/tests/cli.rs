use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gelation(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gelation")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

const CONSTANT: &str = r#"
[simulate]
kernel = { kind = "constant", c = 2.0 }
initial = "exponential"
t_end = 1.0
outputs = 3

[grid]
x_min = 1e-4
x_max = 200.0
nodes = 512

[solver]
dt_init = 0.01
"#;

fn last_slice(csv: &str) -> Vec<(f64, f64)> {
    let rows: Vec<Vec<f64>> = csv.lines().skip(1).map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    let t_end = rows.last().unwrap()[0];
    rows.iter().filter(|r| r[0] == t_end).map(|r| (r[1], r[2])).collect()
}

#[test]
fn validate_passes_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = gelation(&["validate", "--out", "v"], dir.path());
    let out = text(&o.stdout);
    assert!(o.status.success(), "{out}{}", text(&o.stderr));
    assert!(out.lines().filter(|l| l.starts_with("PASS")).count() >= 12, "{out}");
    assert!(!out.contains("FAIL"));
    assert!(dir.path().join("v/manifest.json").exists());
}

#[test]
fn lambda_out_of_range_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[params]\nlambda = 2.5\n").unwrap();
    let o = gelation(&["simulate", "--config", "c.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = text(&o.stderr);
    assert!(err.contains("params.lambda") && err.contains("1 < lambda < 2"), "{err}");
}

#[test]
fn unknown_key_exits_2_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[solver]\nrtoll = 1e-6\n").unwrap();
    let o = gelation(&["simulate", "--config", "c.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("solver.rtoll"), "{}", text(&o.stderr));
}

#[test]
fn zero_threads_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = gelation(&["validate", "--threads", "0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[fundsol]\ntaus = [0.1]\n").unwrap();
    let o = gelation(&["fundsol", "--config", "c.toml", "--out", "f"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", text(&o.stderr));
    assert!(text(&o.stderr).contains("xi_half_width"));
}

#[test]
fn constant_kernel_simulation_is_exact_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), CONSTANT).unwrap();
    for out in ["a", "b"] {
        let o = gelation(&["simulate", "--config", "c.toml", "--out", out], dir.path());
        assert!(o.status.success(), "{}", text(&o.stderr));
    }
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for f in ["trajectory.csv", "gel.csv", "m1.svg", "tail.svg", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs between runs");
    }
    let csv = fs::read_to_string(a.join("trajectory.csv")).unwrap();
    let worst = last_slice(&csv)
        .into_iter()
        .filter(|(x, _)| *x >= 0.1 && *x <= 20.0)
        .map(|(x, f)| (f / (0.25 * (-x / 2.0).exp()) - 1.0).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-3, "closed form mismatch {worst:e}");
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["config"]["grid"]["nodes"], 512);
    assert!((m["config"]["params"]["delta_bar"].as_f64().unwrap() - 0.15).abs() < 1e-12);
    assert!(fs::read_to_string(a.join("m1.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn norms_read_a_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), CONSTANT).unwrap();
    assert!(gelation(&["simulate", "--config", "c.toml", "--out", "s"], dir.path()).status.success());
    let cfg = format!("{CONSTANT}\n[norms]\ninput = \"s/trajectory.csv\"\nspace = [\"triple_qp\"]\nlocal = [\"minf\"]\nwindows = [[0.0, 1.0], [0.5, 4.0]]\n");
    fs::write(dir.path().join("n.toml"), cfg).unwrap();
    let o = gelation(&["norms", "--config", "n.toml", "--out", "n"], dir.path());
    assert!(o.status.success(), "{}", text(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("n/norms.json")).unwrap()).unwrap();
    let list = v.as_array().unwrap();
    assert_eq!(list.len(), 3);
    assert!(list.iter().all(|r| r["value"].as_f64().unwrap() > 0.0));
}

#[test]
fn norms_without_input_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = gelation(&["norms"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("norms.input"));
}

#[test]
fn sweep_runs_each_lambda() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), format!("{CONSTANT}\n[sweep]\nlambdas = [1.3, 1.7]\npipeline = \"simulate\"\n")).unwrap();
    let o = gelation(&["sweep", "--config", "c.toml", "--out", "w", "--threads", "2"], dir.path());
    assert!(o.status.success(), "{}", text(&o.stderr));
    for l in ["1.3", "1.7"] {
        let m = dir.path().join(format!("w/lambda_{l}/manifest.json"));
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(m).unwrap()).unwrap();
        assert_eq!(v["config"]["params"]["lambda"].as_f64().unwrap().to_string(), l);
    }
    assert!(dir.path().join("w/sweep.json").exists());
}

#[test]
fn sweep_reports_bad_lambdas() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[sweep]\nlambdas = [1.5, 2.0]\n").unwrap();
    let o = gelation(&["sweep", "--config", "c.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("sweep.lambdas[1]"), "{}", text(&o.stderr));
}
