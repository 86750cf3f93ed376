//! Configuration-driven experiment harness. Every run writes its resolved
//! config, CSV records and binary snapshots into one artifact directory.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use dkw_core::diag::{conservation_report, entropy_report, kinetic_band_report};
use dkw_core::kernel::check_lps;
use dkw_core::rate::{mc_tail, rate_forward, rate_par, tube_exit_event};
use dkw_core::solver::{
    solve_skeleton, solve_spde, ControlMode, SolveOutput, StepRecord, Trajectory,
};
use dkw_core::{ScalarField, solve_controlled};

#[derive(Parser)]
#[command(name = "dkw", about = "numerical laboratory for conservative interacting diffusions")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact directory (overrides [output].directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed override for [noise].seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (speed only; results are identical).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// One sample path of the noisy equation plus reports.
    Simulate,
    /// Deterministic (controlled) run.
    Skeleton,
    /// Forward and recovered rate on the configured control.
    Rate,
    /// Monte Carlo tail estimates over the configured eps list.
    Mc,
    /// Kernel assumption report.
    CheckKernel,
    /// Re-run diagnostics over a stored trajectory directory.
    Diagnose { dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, String> {
    let path = cli.config.as_ref().ok_or("--config is required")?;
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.override_seed(cli.seed);
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: Option<&ExperimentConfig>) -> Result<PathBuf, String> {
    let dir = cli
        .out
        .clone()
        .or_else(|| {
            cfg.and_then(|c| c.output.as_ref())
                .map(|o| PathBuf::from(&o.directory))
        })
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    Ok(dir)
}

fn run(cli: &Cli) -> Result<(), String> {
    match &cli.cmd {
        Cmd::Diagnose { dir } => return cmd_diagnose(dir),
        _ => {}
    }
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, Some(&cfg))?;
    match cli.cmd {
        Cmd::Simulate => cmd_simulate(&cfg, &dir),
        Cmd::Skeleton => cmd_skeleton(&cfg, &dir),
        Cmd::Rate => cmd_rate(&cfg, &dir),
        Cmd::Mc => cmd_mc(&cfg, &dir),
        Cmd::CheckKernel => cmd_check_kernel(&cfg, &dir),
        Cmd::Diagnose { .. } => unreachable!(),
    }
}

fn write_file(path: &Path, content: &str) -> Result<(), String> {
    std::fs::write(path, content).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn csv_header(seed: u64, columns: &str) -> String {
    format!("# seed: {seed}\n{columns}\n")
}

fn records_csv(seed: u64, records: &[StepRecord]) -> String {
    let mut out = csv_header(seed, "t,mass,min,max,entropy,dissipation_cum,l2");
    for r in records {
        out.push_str(&format!(
            "{:.10e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.t, r.mass, r.min, r.max, r.entropy, r.dissipation_cum, r.l2
        ));
    }
    out
}

fn save_run(cfg: &ExperimentConfig, out: &SolveOutput, dir: &Path) -> Result<(), String> {
    let seed = cfg.resolved_seed();
    write_file(&dir.join("resolved.toml"), &cfg.to_toml())?;
    write_file(
        &dir.join("trajectory.csv"),
        &records_csv(seed, &out.trajectory.records),
    )?;
    let mut index = csv_header(seed, "index,t,file");
    for (i, (t, snap)) in out
        .trajectory
        .times
        .iter()
        .zip(&out.trajectory.snapshots)
        .enumerate()
    {
        let name = format!("snapshot_{i:06}.dkw");
        dkw_core::snapshot::write_scalar(&dir.join(&name), snap)
            .map_err(|e| format!("snapshot write: {e}"))?;
        index.push_str(&format!("{i},{t:.10e},{name}\n"));
    }
    write_file(&dir.join("snapshots.csv"), &index)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn cmd_simulate(cfg: &ExperimentConfig, dir: &Path) -> Result<(), String> {
    let grid = cfg.build_grid()?;
    let kernel = cfg.build_kernel(&grid)?;
    let scfg = cfg.build_solver(grid.dim())?;
    if !(scfg.eps > 0.0) || scfg.noise.is_none() {
        return Err("[solver].eps > 0 and [noise] required for simulate".into());
    }
    let rho0 = config::default_rho0(&grid);
    let out = solve_spde(&rho0, &kernel, &scfg).map_err(|e| e.to_string())?;
    save_run(cfg, &out, dir)?;
    let mut report = conservation_report(&out.trajectory);
    report
        .checks
        .extend(entropy_report(&out.trajectory, None, &kernel).checks);
    write_file(&dir.join("diagnostics.csv"), &report.to_csv())?;
    println!("{report}");
    Ok(())
}

fn cmd_skeleton(cfg: &ExperimentConfig, dir: &Path) -> Result<(), String> {
    let grid = cfg.build_grid()?;
    let kernel = cfg.build_kernel(&grid)?;
    let mut scfg = cfg.build_solver(grid.dim())?;
    if scfg.eps != 0.0 {
        return Err("[solver].eps must be 0 for skeleton (use simulate)".into());
    }
    scfg.noise = None;
    let rho0 = config::default_rho0(&grid);
    let control = cfg.build_control(&grid, scfg.nsteps(), scfg.dt)?;
    let out = solve_skeleton(&rho0, &control, &kernel, &scfg).map_err(|e| e.to_string())?;
    save_run(cfg, &out, dir)?;
    let report = entropy_report(&out.trajectory, Some(&out.control), &kernel);
    write_file(&dir.join("diagnostics.csv"), &report.to_csv())?;
    println!("{report}");
    Ok(())
}

fn cmd_rate(cfg: &ExperimentConfig, dir: &Path) -> Result<(), String> {
    let grid = cfg.build_grid()?;
    let kernel = cfg.build_kernel(&grid)?;
    let mut scfg = cfg.build_solver(grid.dim())?;
    if scfg.eps != 0.0 {
        return Err("[solver].eps must be 0 for rate".into());
    }
    scfg.noise = None;
    if scfg.snapshot_stride != 1 {
        return Err("[solver].snapshot_stride must be 1 for rate".into());
    }
    let rho0 = config::default_rho0(&grid);
    let control = cfg.build_control(&grid, scfg.nsteps(), scfg.dt)?;
    if matches!(control, ControlMode::None) {
        return Err("[control] section required for rate".into());
    }
    let out = solve_controlled(&rho0, &kernel, &control, &scfg).map_err(|e| e.to_string())?;
    let fwd = rate_forward(&out.control);
    let par = rate_par(&out.trajectory, &kernel, &scfg).map_err(|e| e.to_string())?;
    let gap = if fwd > 0.0 {
        (par.total - fwd).abs() / fwd
    } else {
        0.0
    };
    save_run(cfg, &out, dir)?;
    let case = cfg
        .control
        .as_ref()
        .map(|c| c.mode.clone())
        .unwrap_or_default();
    let mut csv = csv_header(cfg.resolved_seed(), "case,i_forward,i_par,gap");
    csv.push_str(&format!("{case},{fwd:.10e},{:.10e},{gap:.6e}\n", par.total));
    write_file(&dir.join("rate.csv"), &csv)?;
    println!("I_forward = {fwd:.6e}, I_par = {:.6e}, gap = {gap:.4}", par.total);
    Ok(())
}

fn cmd_mc(cfg: &ExperimentConfig, dir: &Path) -> Result<(), String> {
    let grid = cfg.build_grid()?;
    let kernel = cfg.build_kernel(&grid)?;
    let mc = cfg.mc.as_ref().ok_or("[mc] section required for mc")?;
    if mc.event != "tube-exit" {
        return Err(format!("[mc].event: unknown event {:?}", mc.event));
    }
    let seed = cfg
        .noise
        .as_ref()
        .ok_or("[noise].seed required for mc")?
        .seed;
    let mut scfg = cfg.build_solver(grid.dim())?;
    scfg.eps = 0.0;
    scfg.noise = None;
    let rho0 = config::default_rho0(&grid);
    let reference = solve_skeleton(&rho0, &ControlMode::None, &kernel, &scfg)
        .map_err(|e| e.to_string())?
        .trajectory;
    let estimates = mc_tail(
        &rho0,
        &kernel,
        &scfg,
        &mc.eps_list,
        mc.beta,
        seed,
        mc.trials,
        tube_exit_event(&reference, mc.radius),
    )
    .map_err(|e| e.to_string())?;
    write_file(&dir.join("resolved.toml"), &cfg.to_toml())?;
    let mut csv = csv_header(seed, "eps,k,trials,hits,estimate,stderr");
    for t in &estimates {
        csv.push_str(&format!(
            "{:.6e},{},{},{},{},{}\n",
            t.eps,
            t.k_cutoff,
            t.trials,
            t.hits,
            t.estimate
                .map(|e| format!("{e:.10e}"))
                .unwrap_or_else(|| "censored".into()),
            t.stderr
                .map(|e| format!("{e:.4e}"))
                .unwrap_or_else(|| "censored".into()),
        ));
        println!(
            "eps {:.4}: K = {}, hits {}/{}, estimate {}",
            t.eps,
            t.k_cutoff,
            t.hits,
            t.trials,
            t.estimate
                .map(|e| format!("{e:.6e}"))
                .unwrap_or_else(|| "censored (no hits)".into())
        );
    }
    write_file(&dir.join("tail.csv"), &csv)?;
    Ok(())
}

fn cmd_check_kernel(cfg: &ExperimentConfig, dir: &Path) -> Result<(), String> {
    let grid = cfg.build_grid()?;
    let kernel = cfg.build_kernel(&grid)?;
    let report = check_lps(&kernel, &grid).map_err(|e| e.to_string())?;
    write_file(&dir.join("resolved.toml"), &cfg.to_toml())?;
    let mut csv = csv_header(
        cfg.resolved_seed(),
        "lp_norm_v,lq_norm_div_v,growth_v,growth_div,a1,a2,trend,pass",
    );
    csv.push_str(&format!(
        "{:.10e},{:.10e},{:.6},{:.6},{},{},{},{}\n",
        report.lp_norm_v,
        report.lq_norm_div_v,
        report.growth_factor_v,
        report.growth_factor_div,
        report.a1_exponents_ok,
        report.a2_exponents_ok,
        report.trend_ok,
        report.pass
    ));
    write_file(&dir.join("kernel_report.csv"), &csv)?;
    println!("{report}");
    if report.pass {
        Ok(())
    } else {
        Err("kernel assumptions not satisfied".into())
    }
}

fn cmd_diagnose(dir: &Path) -> Result<(), String> {
    let traj = load_trajectory(dir)?;
    let mut report = conservation_report(&traj);
    let max_rho = traj.records.iter().map(|r| r.max).fold(0.0f64, f64::max);
    let bands = kinetic_band_report(&traj, &[max_rho + 1.0, max_rho / 2.0, 1.0]);
    write_file(&dir.join("diagnostics.csv"), &report.to_csv())?;
    let mut band_csv = String::from("m,high_band,low_band_scaled\n");
    for i in 0..bands.m_list.len() {
        band_csv.push_str(&format!(
            "{:.6e},{:.10e},{:.10e}\n",
            bands.m_list[i], bands.high_band[i], bands.low_band_scaled[i]
        ));
    }
    write_file(&dir.join("bands.csv"), &band_csv)?;
    report
        .checks
        .drain(..)
        .for_each(|c| println!("{}: measured {:.6e} ({})", c.name, c.measured, c.pass));
    Ok(())
}

/// Rebuild a trajectory from a stored artifact directory; a missing
/// snapshot is reported by index.
fn load_trajectory(dir: &Path) -> Result<Trajectory, String> {
    let records_text = std::fs::read_to_string(dir.join("trajectory.csv"))
        .map_err(|e| format!("missing trajectory.csv in {}: {e}", dir.display()))?;
    let mut records = Vec::new();
    for line in records_text.lines().skip(2) {
        let f: Vec<f64> = line
            .split(',')
            .map(|v| v.parse::<f64>().map_err(|e| format!("trajectory.csv: {e}")))
            .collect::<Result<_, _>>()?;
        if f.len() != 7 {
            return Err("trajectory.csv: malformed row".into());
        }
        records.push(StepRecord {
            t: f[0],
            mass: f[1],
            min: f[2],
            max: f[3],
            entropy: f[4],
            dissipation_cum: f[5],
            l2: f[6],
        });
    }
    if records.len() < 2 {
        return Err("trajectory.csv: needs at least two records".into());
    }
    let index_text = std::fs::read_to_string(dir.join("snapshots.csv"))
        .map_err(|e| format!("missing snapshots.csv in {}: {e}", dir.display()))?;
    let mut times = Vec::new();
    let mut snapshots: Vec<ScalarField> = Vec::new();
    for line in index_text.lines().skip(2) {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err("snapshots.csv: malformed row".into());
        }
        let idx: usize = parts[0].parse().map_err(|e| format!("snapshots.csv: {e}"))?;
        let t: f64 = parts[1].parse().map_err(|e| format!("snapshots.csv: {e}"))?;
        let path = dir.join(parts[2]);
        let snap = dkw_core::snapshot::read_scalar(&path)
            .map_err(|_| format!("missing snapshot index {idx} ({})", path.display()))?;
        times.push(t);
        snapshots.push(snap);
    }
    let dt = records[1].t - records[0].t;
    let stride = if times.len() > 1 {
        ((times[1] - times[0]) / dt).round() as usize
    } else {
        1
    };
    Ok(Trajectory {
        times,
        snapshots,
        records,
        dt,
        snapshot_stride: stride.max(1),
        eta: 0.01,
        gamma: 0.0,
        floor: 1e-12,
        clamped_mass: 0.0,
    })
}
