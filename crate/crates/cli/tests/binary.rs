use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
name = "tiny"

[params]
eps = 0.1

[grid]
n_cells = 30

[stepper]
dt = 2e-3
t_end = 8.0
output_every = 5

[initial]
family = "gaussian_bump"
n_level = 1.0
p_level = 0.5
amplitude = 0.5
"#;

fn srhlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srhlab"))
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn config_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write(tmp.path(), "bad.toml", "[params]\neps = -1.0\n");
    let out = srhlab(&["simulate", &bad]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("params.eps"));

    let missing = tmp.path().join("nope.toml");
    assert_eq!(
        srhlab(&["sweep", missing.to_str().unwrap()]).status.code(),
        Some(1)
    );
    assert_eq!(srhlab(&["no-such-command"]).status.code(), Some(1));
}

#[test]
fn simulate_then_fit_the_written_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "tiny.toml", CONFIG);
    let dir = tmp.path().join("out");
    let out = srhlab(&["simulate", &cfg, "--output", dir.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let csv = dir.join("diagnostics_eps_0.1.csv");
    let out = srhlab(&["fit", csv.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let fit: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(fit["k"].as_f64().unwrap() > 0.0);
    assert!(fit["r2"].as_f64().unwrap() > 0.99);
}

#[test]
fn equilibrium_prints_json() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "tiny.toml", CONFIG);
    let out = srhlab(&["equilibrium", &cfg, "--mass", "-0.5"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let eq: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let (n, p) = (
        eq["n_star"].as_f64().unwrap(),
        eq["p_star"].as_f64().unwrap(),
    );
    assert!((n * p - 1.0).abs() < 1e-12);
    assert_eq!(eq["mass"].as_f64().unwrap(), -0.5);
}

#[test]
fn fit_of_a_malformed_csv_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = write(tmp.path(), "bad.csv", "t,nbar\n0,1\n");
    assert_eq!(srhlab(&["fit", &csv]).status.code(), Some(1));
}
