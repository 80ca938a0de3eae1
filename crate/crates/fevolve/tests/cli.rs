//! End-to-end runs of the `fevolve` binary: exit codes, artifact files,
//! determinism under a fixed seed.

use std::fs;
use std::process::{Command, Output};

use tempfile::TempDir;

fn fevolve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fevolve"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn list_presets_succeeds_and_writes_catalogue() {
    let dir = TempDir::new().unwrap();
    let out = fevolve(&["list-presets", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    for name in [
        "semilinear_poisson_2d",
        "nls_1d",
        "nonlinear_diffusion_1d",
        "heat_1d",
    ] {
        assert!(stdout.contains(name), "missing {name} in {stdout}");
    }
    assert!(dir.path().join("presets.json").exists());
}

#[test]
fn unknown_command_exits_one() {
    let out = fevolve(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown command"));
}

#[test]
fn spectral_study_writes_monotone_lambda_min() {
    let dir = TempDir::new().unwrap();
    let out = fevolve(&[
        "spectral-study",
        "--preset",
        "heat_1d",
        "--h",
        "0.125,0.0625,0.03125",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(
        dir.path()
            .join("spectral-study_heat_1d_0.125-0.0625-0.03125.csv"),
    )
    .unwrap();
    let lambda_mins: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(lambda_mins.len(), 3);
    assert!(lambda_mins.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn elliptic_solve_with_violated_smallness_exits_one() {
    let dir = TempDir::new().unwrap();
    // r = 10 pushes the Lipschitz constant past the coercivity constant
    let out = fevolve(&[
        "solve-elliptic",
        "--preset",
        "semilinear_poisson_2d",
        "--h",
        "0.125",
        "--r",
        "10",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("elliptic"));
}

#[test]
fn config_file_run_is_deterministic() {
    let dir_a = TempDir::new().unwrap();
    let dir_b = TempDir::new().unwrap();
    let run = |dir: &TempDir| {
        let config = dir.path().join("run.json");
        fs::write(
            &config,
            format!(
                r#"{{"command":"solve-evolution","preset":"heat_1d","h":[0.0625],"k":6,"seed":7,"out_dir":"{}"}}"#,
                dir.path().display()
            ),
        )
        .unwrap();
        let out = fevolve(&["--config", config.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        fs::read(dir.path().join("solve-evolution_heat_1d_0.0625.csv")).unwrap()
    };
    assert_eq!(run(&dir_a), run(&dir_b));
}

#[test]
fn flag_overrides_config_file() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("run.json");
    fs::write(
        &config,
        format!(
            r#"{{"command":"solve-evolution","preset":"heat_1d","h":[0.125],"out_dir":"{}"}}"#,
            dir.path().display()
        ),
    )
    .unwrap();
    let out = fevolve(&["--config", config.to_str().unwrap(), "--h", "0.0625"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("solve-evolution_heat_1d_0.0625.csv").exists());
    assert!(!dir.path().join("solve-evolution_heat_1d_0.125.csv").exists());
}
