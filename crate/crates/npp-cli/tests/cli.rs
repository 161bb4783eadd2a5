//! End-to-end tests of the command-line interface: exit codes, file
//! emission, config round trips, and the fail-fast contract.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_npp")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("failed to spawn the npp binary")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("npp-cli-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn transform_emits_uniform_pushforward() {
    let dir = tmp_dir("transform");
    let out = run_in(
        &dir,
        &[
            "--out-dir",
            "tr",
            "transform",
            "--direction",
            "a0-to-v",
            "--hist",
            "10,0.0,1.0",
            "--prior",
            "uniform",
            "--vmax",
            "1e8",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("tr/induced_v.csv")).unwrap();
    let grid = npp::DensityGrid::from_csv(&csv).unwrap();
    // Uniform prior on a0 with n0/s0^2 = 10 induces 20 (1 + 20 v)^{-2}.
    let at = grid.interpolate(0.05);
    assert!((at - 20.0 / 4.0).abs() < 0.02, "density at 0.05 = {at}");
    assert!(dir.join("tr/manifest.json").exists());
}

#[test]
fn posterior_writes_grids_and_summary() {
    let dir = tmp_dir("posterior");
    let out = run_in(
        &dir,
        &[
            "--out-dir",
            "post",
            "posterior",
            "--model",
            "bnpp",
            "--current",
            "30,1.5,0.5",
            "--hist",
            "20,1.0,0.5",
            "--hist",
            "30,2.0,1.0",
            "--prior",
            "beta:2,2",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("post/summary.json")).unwrap())
            .unwrap();
    assert!(summary["theta"]["mean"].is_number());
    assert!(summary["a0_1"]["mean"].is_number());
    assert!(dir.join("post/theta.csv").exists());
    assert!(dir.join("post/a0_2.csv").exists());
}

#[test]
fn missing_inputs_exit_2_without_outputs() {
    let dir = tmp_dir("exit2");
    let out = run_in(&dir, &["--out-dir", "bad", "posterior", "--model", "npp"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.join("bad").exists(), "no outputs may be written on config errors");
}

#[test]
fn invalid_scenario_config_exits_2_without_outputs() {
    let dir = tmp_dir("scenario2");
    std::fs::write(
        dir.join("cfg.kv"),
        "study:\n  current:\n    n: 30\n    ybar: 0.0\n    sigma2: 1.0\n  historical:\n    - n: 50\n      ybar: 0.0\n      sigma2: 1.0\nmodels:\n",
    )
    .unwrap();
    let out = run_in(&dir, &["--out-dir", "sc", "scenario", "--config", "cfg.kv"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.join("sc").exists());
}

#[test]
fn scenario_round_trip_is_bit_identical() {
    let dir = tmp_dir("roundtrip");
    std::fs::write(
        dir.join("cfg.kv"),
        "study:\n  current:\n    n: 20\n    ybar: 0.0\n    sigma2: 1.0\n  historical:\n    - n: 30\n      ybar: 0.5\n      sigma2: 1.0\nmodels:\n  - bnpp\n  - a0=0\nseed: 99\n",
    )
    .unwrap();
    let out = run_in(&dir, &["--out-dir", "sc", "scenario", "--config", "cfg.kv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let theta_first = std::fs::read(dir.join("sc/bnpp_theta.csv")).unwrap();
    let resolved = dir.join("sc/resolved_config.json");
    assert!(resolved.exists());
    // Rerunning from the resolved config reproduces the outputs exactly.
    let out = run_in(&dir, &["scenario", "--config", "sc/resolved_config.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let theta_second = std::fs::read(dir.join("sc/bnpp_theta.csv")).unwrap();
    assert_eq!(theta_first, theta_second);
}

#[test]
fn binary_zero_cell_exits_2_and_continuity_rescues() {
    let dir = tmp_dir("binary");
    let out = run_in(&dir, &["--out-dir", "b1", "binary", "--trial", "50,0,50,20"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run_in(
        &dir,
        &["--out-dir", "b2", "binary", "--trial", "50,0,50,20", "--continuity"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("b2/log_odds_ratios.json").exists());
}

#[test]
fn binary_emits_studyset_for_posterior_input() {
    let dir = tmp_dir("binary-study");
    let out = run_in(
        &dir,
        &[
            "--out-dir",
            "b",
            "binary",
            "--trial",
            "46,24,46,19",
            "--trial",
            "274,158,274,120",
        ],
    );
    assert!(out.status.success());
    let out = run_in(
        &dir,
        &[
            "--out-dir",
            "p",
            "posterior",
            "--model",
            "bnpp",
            "--study-file",
            "b/studyset.json",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("p/theta.csv").exists());
}

#[test]
fn equivalence_preset_passes() {
    let dir = tmp_dir("equiv");
    let out = run_in(&dir, &["--out-dir", "eq", "equivalence", "--preset", "fig-a1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("eq/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["pass"], true);
}

#[test]
fn fit_recovers_tabulated_inverse_gamma() {
    let dir = tmp_dir("fit");
    // Tabulate IG(3, 1) and feed it back through the CLI.
    let prior = npp::prior::PriorSpec::InverseGamma { shape: 3.0, scale: 1.0 };
    let grid = npp::DensityGrid::log_spaced_from_fn(1e-4, 1e3, 4097, |v| {
        prior.log_density(v).exp()
    })
    .unwrap()
    .normalize()
    .unwrap();
    std::fs::write(dir.join("ig.csv"), grid.to_csv()).unwrap();
    let out = run_in(&dir, &["--out-dir", "f", "fit", "--family", "inverse-gamma", "--input", "ig.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("f/fit.json")).unwrap()).unwrap();
    assert!((fit["shape"].as_f64().unwrap() - 3.0).abs() < 1e-2);
    assert!((fit["scale"].as_f64().unwrap() - 1.0).abs() < 1e-2);
    let overlay = std::fs::read_to_string(dir.join("f/overlay.csv")).unwrap();
    assert!(overlay.starts_with("point,target,fitted\n"));
}

#[test]
fn sample_writes_draws_and_diagnostics() {
    let dir = tmp_dir("sample");
    let out = run_in(
        &dir,
        &[
            "--out-dir",
            "s",
            "--seed",
            "5",
            "sample",
            "--model",
            "bnpp",
            "--current",
            "30,0.0,1.0",
            "--hist",
            "50,0.0,1.0",
            "--hist",
            "30,0.0,1.0",
            "--chains",
            "2",
            "--iters",
            "600",
            "--burnin",
            "300",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let draws = std::fs::read_to_string(dir.join("s/draws.csv")).unwrap();
    assert!(draws.starts_with("chain,iteration,parameter,value\n"));
    assert!(draws.contains(",a0_2,"));
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("s/diagnostics.json")).unwrap())
            .unwrap();
    assert!(diag["parameters"]["theta"]["ess"].as_f64().unwrap() > 0.0);
}

#[test]
fn unknown_figure_exits_2() {
    let dir = tmp_dir("figure");
    let out = run_in(&dir, &["--out-dir", "f", "figure-data", "--figure", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}
