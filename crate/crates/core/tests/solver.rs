//! End-to-end solver behavior: exact reductions, conservation, refinement
//! and noise/control consistency.

use std::sync::Arc;

use dkw_core::field::ScalarField;
use dkw_core::grid::{make_grid, TorusGrid, TWO_PI};
use dkw_core::kernel::{kernel_smooth_fourier, kernel_zero, FourierMode, Kernel};
use dkw_core::noise::NoiseSpec;
use dkw_core::solver::{
    solve_controlled, solve_skeleton, solve_spde, step, ControlMode, ControlPath, Positivity,
    SolverConfig,
};

fn single_mode_kernel(grid: &Arc<TorusGrid>) -> Kernel {
    let d = grid.dim();
    let mut sin_amp = vec![0.0; d];
    sin_amp[0] = 0.8;
    let mut cos_amp = vec![0.0; d];
    if d > 1 {
        cos_amp[1] = 0.3;
    }
    let mut k = vec![0i64; d];
    k[0] = 1;
    kernel_smooth_fourier(grid, vec![FourierMode { k, sin_amp, cos_amp }]).unwrap()
}

#[test]
fn implicit_heat_step_symbol() {
    // one step on a single mode: amplitude divides by 1 + 4 pi^2 dt
    let g = make_grid(1, 64).unwrap();
    let dt = 1e-3;
    let rho = ScalarField::from_fn(&g, |x| 1.0 + 0.5 * (TWO_PI * x[0]).cos());
    let cfg = SolverConfig::deterministic(dt, dt);
    let out = step(&rho, &cfg, None, None, None).unwrap();
    let factor = 1.0 / (1.0 + TWO_PI * TWO_PI * dt);
    let want = ScalarField::from_fn(&g, |x| 1.0 + 0.5 * factor * (TWO_PI * x[0]).cos());
    assert!(out.l1_distance(&want) <= 1e-12);
}

#[test]
fn heat_solution_exact_decay() {
    let g = make_grid(1, 64).unwrap();
    let rho0 = ScalarField::from_fn(&g, |x| 1.0 + 0.5 * (TWO_PI * x[0]).cos());
    let cfg = SolverConfig::deterministic(0.1, 1e-4);
    let out = solve_skeleton(&rho0, &ControlMode::None, &kernel_zero(&g), &cfg).unwrap();
    let decay = (-TWO_PI * TWO_PI * 0.1).exp();
    let exact = ScalarField::from_fn(&g, |x| 1.0 + 0.5 * decay * (TWO_PI * x[0]).cos());
    let mut diff = out.trajectory.final_snapshot().clone();
    diff.axpy(-1.0, &exact);
    let rel = diff.l2_norm() / exact.l2_norm();
    assert!(rel <= 1e-3, "relative L2 error {rel}");
}

#[test]
fn constant_state_is_fixed_point_of_smooth_drift() {
    let g = make_grid(2, 16).unwrap();
    let rho0 = ScalarField::constant(&g, 1.0);
    let kernel = single_mode_kernel(&g);
    let cfg = SolverConfig::deterministic(0.01, 1e-3);
    let out = solve_skeleton(&rho0, &ControlMode::None, &kernel, &cfg).unwrap();
    let mut diff = out.trajectory.final_snapshot().clone();
    diff.axpy(-1.0, &rho0);
    assert!(diff.lp_norm(f64::INFINITY) <= 1e-12);
}

#[test]
fn richardson_first_order_in_time() {
    let g = make_grid(1, 32).unwrap();
    let rho0 = ScalarField::from_fn(&g, |x| 1.0 + 0.4 * (TWO_PI * x[0]).sin());
    let kernel = single_mode_kernel(&g);
    let t_final = 0.02;
    let gfun = |x: &[f64], t: f64, _a: usize| 0.5 * (TWO_PI * x[0]).cos() * (1.0 + t);
    let run = |dt: f64| {
        let mut cfg = SolverConfig::deterministic(t_final, dt);
        cfg.snapshot_stride = usize::MAX - 1; // only first and last
        let path = ControlPath::from_fn(&g, cfg.nsteps(), dt, gfun);
        solve_skeleton(&rho0, &ControlMode::Exogenous(path), &kernel, &cfg)
            .unwrap()
            .trajectory
            .final_snapshot()
            .clone()
    };
    let a = run(2e-4);
    let b = run(1e-4);
    let c = run(5e-5);
    let e1 = a.l1_distance(&b);
    let e2 = b.l1_distance(&c);
    let ratio = e1 / e2;
    assert!(
        (1.7..=2.3).contains(&ratio),
        "refinement ratio {ratio} (e1 {e1}, e2 {e2})"
    );
}

#[test]
fn spde_mass_conserved_over_thousand_steps() {
    let g = make_grid(1, 32).unwrap();
    let rho0 = ScalarField::from_fn(&g, |x| 1.0 + 0.3 * (TWO_PI * x[0]).sin());
    let kernel = single_mode_kernel(&g);
    let mut cfg = SolverConfig::deterministic(0.1, 1e-4);
    cfg.eps = 0.01;
    cfg.noise = Some(NoiseSpec::new(1, 2, 31_415));
    let out = solve_spde(&rho0, &kernel, &cfg).unwrap();
    assert_eq!(out.trajectory.records.len(), 1001);
    let m0 = out.trajectory.records[0].mass;
    assert!(out.trajectory.mass_drift() <= 1e-10 * m0);
    // nonnegativity in observe-only mode
    let min = out.trajectory.records.iter().map(|r| r.min).fold(f64::INFINITY, f64::min);
    let max = out.trajectory.records.iter().map(|r| r.max).fold(0.0f64, f64::max);
    assert!(min >= -1e-6 * max, "min {min}, max {max}");
}

#[test]
fn zero_control_matches_spde_bitwise() {
    let g = make_grid(1, 32).unwrap();
    let rho0 = ScalarField::from_fn(&g, |x| 1.0 + 0.3 * (TWO_PI * x[0]).sin());
    let kernel = single_mode_kernel(&g);
    let mut cfg = SolverConfig::deterministic(0.01, 1e-4);
    cfg.eps = 0.05;
    cfg.noise = Some(NoiseSpec::new(1, 2, 7));
    let a = solve_spde(&rho0, &kernel, &cfg).unwrap();
    let zero_path = ControlPath::zero(&g, cfg.nsteps(), cfg.dt);
    let b = solve_controlled(&rho0, &kernel, &ControlMode::Exogenous(zero_path), &cfg).unwrap();
    assert_eq!(
        a.trajectory.final_snapshot().values,
        b.trajectory.final_snapshot().values
    );
}

#[test]
fn eps_zero_controlled_reduces_to_skeleton_with_projection() {
    let g = make_grid(1, 32).unwrap();
    let rho0 = ScalarField::from_fn(&g, |x| 1.0 + 0.3 * (TWO_PI * x[0]).cos());
    let kernel = kernel_zero(&g);
    let mut cfg = SolverConfig::deterministic(0.01, 1e-4);
    // band-limited control within K = 2: projection is the identity
    let path = ControlPath::from_fn(&g, cfg.nsteps(), cfg.dt, |x, _, _| {
        0.4 * (TWO_PI * 2.0 * x[0]).sin()
    });
    cfg.noise = Some(NoiseSpec::new(1, 2, 1));
    let with_proj =
        solve_controlled(&rho0, &kernel, &ControlMode::Exogenous(path.clone()), &cfg).unwrap();
    cfg.noise = None;
    let without =
        solve_skeleton(&rho0, &ControlMode::Exogenous(path), &kernel, &cfg).unwrap();
    assert!(
        with_proj
            .trajectory
            .final_snapshot()
            .l1_distance(without.trajectory.final_snapshot())
            <= 1e-12
    );
}

#[test]
fn control_energy_matches_double_loop_quadrature() {
    let g = make_grid(1, 16).unwrap();
    let dt = 1e-3;
    let nsteps = 20;
    let path = ControlPath::from_fn(&g, nsteps, dt, |x, t, _| {
        (TWO_PI * x[0]).sin() * (1.0 + 3.0 * t)
    });
    let mut oracle = 0.0;
    for gstep in &path.steps {
        for a in 0..g.dim() {
            for i in 0..g.len() {
                let v = gstep.components[a][i];
                oracle += dt * g.cell_volume() * v * v;
            }
        }
    }
    assert!((path.energy() - oracle).abs() <= 1e-12);
}

#[test]
fn spde_sample_mean_tracks_deterministic_solution() {
    // small-noise sample mean vs the eps = 0 run, within 3 standard errors
    let g = make_grid(1, 32).unwrap();
    let rho0 = ScalarField::from_fn(&g, |x| 1.0 + 0.3 * (TWO_PI * x[0]).sin());
    let kernel = single_mode_kernel(&g);
    let mut cfg = SolverConfig::deterministic(0.02, 1e-3);
    let det = solve_skeleton(&rho0, &ControlMode::None, &kernel, &cfg).unwrap();

    cfg.eps = 1e-3;
    let base = NoiseSpec::new(1, 2, 99);
    let trials = 200;
    let mut mean = ScalarField::zeros(&g);
    let mut finals = Vec::new();
    for trial in 0..trials {
        cfg.noise = Some(base.with_stream(trial));
        let out = solve_spde(&rho0, &kernel, &cfg).unwrap();
        let f = out.trajectory.final_snapshot().clone();
        mean.axpy(1.0 / trials as f64, &f);
        finals.push(f);
    }
    let dist = mean.l1_distance(det.trajectory.final_snapshot());
    // scalar surrogate for the MC error band: spread of per-path L1
    // deviations from the deterministic run
    let devs: Vec<f64> = finals
        .iter()
        .map(|f| f.l1_distance(det.trajectory.final_snapshot()))
        .collect();
    let m = devs.iter().sum::<f64>() / trials as f64;
    let var = devs.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / (trials as f64 - 1.0);
    let se = (var / trials as f64).sqrt();
    assert!(
        dist <= m + 3.0 * se,
        "mean-field distance {dist}, band {m} + 3x{se}"
    );
}

#[test]
fn lr_norm_stable_under_grid_doubling() {
    // time-integrated L^r norm, r = 1 + 2/d, compared across resolutions
    let r = 3.0; // d = 1
    let run = |n: usize| {
        let g = make_grid(1, n).unwrap();
        let rho0 = ScalarField::from_fn(&g, |x| 1.0 + 0.5 * (TWO_PI * x[0]).cos());
        let kernel = single_mode_kernel(&g);
        let cfg = SolverConfig::deterministic(0.02, 1e-4);
        let traj = solve_skeleton(&rho0, &ControlMode::None, &kernel, &cfg)
            .unwrap()
            .trajectory;
        let mut acc = 0.0;
        for (i, s) in traj.snapshots.iter().enumerate() {
            acc += traj.snapshot_dt(i) * s.lp_norm(r).powf(r);
        }
        acc
    };
    let coarse = run(32);
    let fine = run(64);
    assert!(coarse.is_finite() && fine.is_finite());
    let ratio = fine / coarse;
    assert!((0.99..=1.01).contains(&ratio), "L^r ratio {ratio}");
}

#[test]
fn clamp_report_accounts_mass() {
    let g = make_grid(1, 64).unwrap();
    // touches zero: undershoots appear quickly under diffusion
    let rho0 = ScalarField::from_fn(&g, |x| (1.0 + (TWO_PI * x[0]).cos()) / 2.0);
    let mut cfg = SolverConfig::deterministic(0.005, 1e-4);
    cfg.positivity = Positivity::ClampReport;
    let out = solve_skeleton(&rho0, &ControlMode::None, &kernel_zero(&g), &cfg).unwrap();
    assert!(out.trajectory.clamped_mass >= 0.0);
    assert!(out.trajectory.final_snapshot().min() >= 0.0);
}

#[test]
fn validation_errors() {
    let g = make_grid(1, 16).unwrap();
    let rho0 = ScalarField::constant(&g, 1.0);
    let kernel = kernel_zero(&g);

    // eps > 0 without a noise spec
    let mut cfg = SolverConfig::deterministic(0.01, 1e-3);
    cfg.eps = 0.1;
    assert!(solve_controlled(&rho0, &kernel, &ControlMode::None, &cfg).is_err());

    // T/dt not an integer
    let cfg = SolverConfig::deterministic(0.01, 3e-4);
    assert!(solve_skeleton(&rho0, &ControlMode::None, &kernel, &cfg).is_err());

    // control path length mismatch
    let cfg = SolverConfig::deterministic(0.01, 1e-3);
    let path = ControlPath::zero(&g, 3, 1e-3);
    assert!(solve_skeleton(&rho0, &ControlMode::Exogenous(path), &kernel, &cfg).is_err());

    // negative initial data
    let bad = ScalarField::constant(&g, -1.0);
    let cfg = SolverConfig::deterministic(0.01, 1e-3);
    assert!(solve_skeleton(&bad, &ControlMode::None, &kernel, &cfg).is_err());

    // declared energy bound exceeded
    let mut path = ControlPath::from_fn(&g, 10, 1e-3, |_, _, _| 5.0);
    path.bound = Some(1e-6);
    assert!(solve_skeleton(&rho0, &ControlMode::Exogenous(path), &kernel, &cfg).is_err());

    // skeleton entry point refuses eps > 0
    let mut cfg = SolverConfig::deterministic(0.01, 1e-3);
    cfg.eps = 0.1;
    cfg.noise = Some(NoiseSpec::new(1, 1, 0));
    assert!(solve_skeleton(&rho0, &ControlMode::None, &kernel, &cfg).is_err());
}

#[test]
fn stability_heuristic_warns() {
    let g = make_grid(1, 64).unwrap();
    let rho0 = ScalarField::constant(&g, 1.0);
    let cfg = SolverConfig::deterministic(0.01, 1e-3); // dt >> h^2/4
    let out = solve_skeleton(&rho0, &ControlMode::None, &kernel_zero(&g), &cfg).unwrap();
    assert!(!out.warnings.is_empty());
    let fine = SolverConfig::deterministic(0.01, 1e-5);
    let out = solve_skeleton(&rho0, &ControlMode::None, &kernel_zero(&g), &fine).unwrap();
    assert!(out.warnings.is_empty());
}

#[test]
fn snapshot_stride_and_times() {
    let g = make_grid(1, 16).unwrap();
    let rho0 = ScalarField::constant(&g, 1.0);
    let mut cfg = SolverConfig::deterministic(0.01, 1e-3);
    cfg.snapshot_stride = 4;
    let out = solve_skeleton(&rho0, &ControlMode::None, &kernel_zero(&g), &cfg).unwrap();
    // steps 0,4,8 plus the final step 10
    assert_eq!(out.trajectory.times, vec![0.0, 4e-3, 8e-3, 1e-2]);
    assert_eq!(out.trajectory.snapshots.len(), 4);
    assert!((out.trajectory.snapshot_dt(2) - 2e-3).abs() <= 1e-15);
    assert_eq!(out.trajectory.snapshot_dt(3), 0.0);
}
