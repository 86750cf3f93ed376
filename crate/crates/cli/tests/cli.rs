//! End-to-end tests running the built binary against temp directories.

use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_dkw");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn dkw")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SIM_CONFIG: &str = r#"
[grid]
d = 1
n = 32

[kernel]
kind = "smooth"

[[kernel.modes]]
k = [1]
sin_amp = [0.5]
cos_amp = [0.2]

[solver]
T = 0.01
dt = 2e-4
snapshot_stride = 10
eps = 0.05

[noise]
k = 1
seed = 99
"#;

const RATE_CONFIG: &str = r#"
[grid]
d = 1
n = 32

[kernel]
kind = "smooth"

[[kernel.modes]]
k = [1]
sin_amp = [0.5]
cos_amp = [0.2]

[solver]
T = 0.02
dt = 2e-4

[control]
mode = "drift-gradient"
amplitude = 0.4

[[control.phi_modes]]
k = [1]
sin_amp = [1.0]
cos_amp = [0.0]
"#;

#[test]
fn simulate_writes_expected_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sim.toml", SIM_CONFIG);
    let out_dir = tmp.path().join("run");
    let out = run(&["simulate", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["resolved.toml", "trajectory.csv", "snapshots.csv", "diagnostics.csv"] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
    let traj = std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    let mut lines = traj.lines();
    assert_eq!(lines.next().unwrap(), "# seed: 99");
    assert_eq!(
        lines.next().unwrap(),
        "t,mass,min,max,entropy,dissipation_cum,l2"
    );
    // T/dt = 50 steps, stride 10 -> snapshots at indices 0..=5.
    assert!(out_dir.join("snapshot_000005.dkw").exists());
    assert!(!out_dir.join("snapshot_000006.dkw").exists());
}

#[test]
fn same_seed_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sim.toml", SIM_CONFIG);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = run(&["simulate", "--config", &cfg, "--out", dir.to_str().unwrap()]);
        assert!(out.status.success());
    }
    for f in ["trajectory.csv", "snapshot_000005.dkw", "resolved.toml"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f} differs between identical runs"
        );
    }
}

#[test]
fn seed_flag_overrides_config_and_changes_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sim.toml", SIM_CONFIG);
    let dir = tmp.path().join("r");
    let out = run(&[
        "simulate", "--config", &cfg, "--out", dir.to_str().unwrap(), "--seed", "7",
    ]);
    assert!(out.status.success());
    let traj = std::fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("# seed: 7\n"));
    let resolved = std::fs::read_to_string(dir.join("resolved.toml")).unwrap();
    assert!(resolved.contains("seed = 7"));
}

#[test]
fn resolved_config_round_trips_byte_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sim.toml", SIM_CONFIG);
    let first = tmp.path().join("first");
    assert!(run(&["simulate", "--config", &cfg, "--out", first.to_str().unwrap()])
        .status
        .success());
    // Feed the resolved config back in: its own resolved copy must match byte for byte.
    let second = tmp.path().join("second");
    let resolved = first.join("resolved.toml");
    assert!(run(&[
        "simulate",
        "--config",
        resolved.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ])
    .status
    .success());
    assert_eq!(
        std::fs::read(&resolved).unwrap(),
        std::fs::read(second.join("resolved.toml")).unwrap()
    );
}

#[test]
fn invalid_dt_is_rejected_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = SIM_CONFIG.replace("dt = 2e-4", "dt = -1.0");
    let cfg = write_config(tmp.path(), "bad.toml", &bad);
    let out = run(&["simulate", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("[solver].dt"), "stderr: {stderr}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = SIM_CONFIG.replace("dt = 2e-4", "dt = 2e-4\ntypo_key = 1");
    let cfg = write_config(tmp.path(), "bad.toml", &bad);
    let out = run(&["simulate", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("typo_key"), "stderr: {stderr}");
}

#[test]
fn rate_preset_recovers_forward_cost_within_five_percent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "rate.toml", RATE_CONFIG);
    let dir = tmp.path().join("rate");
    let out = run(&["rate", "--config", &cfg, "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("rate.csv")).unwrap();
    let row = csv.lines().nth(2).expect("data row");
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[0], "drift-gradient");
    let gap: f64 = fields[3].parse().unwrap();
    assert!(gap <= 0.05, "gap = {gap}");
}

#[test]
fn check_kernel_reports_pass_for_smooth_kernel() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "rate.toml", RATE_CONFIG);
    let dir = tmp.path().join("ck");
    let out = run(&["check-kernel", "--config", &cfg, "--out", dir.to_str().unwrap()]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.join("kernel_report.csv")).unwrap();
    assert!(csv.lines().nth(2).unwrap().ends_with("true"));
}

#[test]
fn diagnose_rereads_a_run_and_fails_on_missing_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sim.toml", SIM_CONFIG);
    let dir = tmp.path().join("run");
    assert!(run(&["simulate", "--config", &cfg, "--out", dir.to_str().unwrap()])
        .status
        .success());
    let out = run(&["diagnose", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("bands.csv").exists());

    std::fs::remove_file(dir.join("snapshot_000003.dkw")).unwrap();
    let out = run(&["diagnose", dir.to_str().unwrap()]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("missing snapshot index 3"), "stderr: {stderr}");
}

#[test]
fn mc_writes_tail_csv_with_monotone_estimates() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!(
        "{SIM_CONFIG}\n[mc]\ntrials = 60\neps_list = [0.1, 0.05]\nevent = \"tube-exit\"\nradius = 0.25\nbeta = 0.05\n"
    );
    let cfg = write_config(tmp.path(), "mc.toml", &body);
    let dir = tmp.path().join("mc");
    let out = run(&["mc", "--config", &cfg, "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("tail.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    assert_eq!(rows.len(), 2);
    let hits: Vec<u64> = rows
        .iter()
        .map(|r| r.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert!(hits[0] > hits[1], "hits {hits:?} should decrease with eps");
}
