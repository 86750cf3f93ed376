//! Rate function layer: the forward control cost, the variational cost of
//! a density path recovered through weighted elliptic potentials, the weak
//! convergence experiment for oscillatory control perturbations, and the
//! Monte Carlo tail estimator.

use rayon::prelude::*;

use crate::error::{param_err, DkwError, Result};
use crate::field::{ScalarField, VectorField};
use crate::kernel::Kernel;
use crate::noise::{build_modes, scaling_k, NoiseSpec};
use crate::reg::{sigma, sigma_half_prime};
use crate::solver::{
    prepare_kernel, solve_skeleton, solve_spde, ControlMode, ControlPath, SolverConfig,
    Trajectory,
};

/// Forward cost of a control path: `1/2 int int |g|^2`.
pub fn rate_forward(control: &ControlPath) -> f64 {
    0.5 * control.energy()
}

/// One weighted elliptic solve `-div(w grad psi) = r`.
pub struct RieszSolve {
    pub psi: ScalarField,
    /// Relative l2 residual of the final iterate.
    pub rel_residual: f64,
    pub iters: usize,
}

const CG_TOL: f64 = 1e-8;
const CG_MAX_ITERS: usize = 20_000;

fn apply_weighted_laplacian(w: &ScalarField, psi: &ScalarField) -> ScalarField {
    let mut out = psi.gradient().scale_pointwise(w).divergence();
    for v in out.values.iter_mut() {
        *v = -*v;
    }
    out
}

fn inner(a: &ScalarField, b: &ScalarField) -> f64 {
    a.grid.cell_volume()
        * a.values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| x * y)
            .sum::<f64>()
}

fn subtract_mean(f: &mut ScalarField) {
    let mean = f.values.iter().sum::<f64>() / f.values.len() as f64;
    for v in f.values.iter_mut() {
        *v -= mean;
    }
}

/// Inverse-Laplacian preconditioner scaled by the mean weight; the zero
/// mode is pinned to zero, which fixes the gauge.
fn precondition(w_mean: f64, r: &ScalarField) -> ScalarField {
    let grid = &r.grid;
    let spec = grid.fft(&r.values);
    let out: Vec<num_complex::Complex64> = spec
        .iter()
        .enumerate()
        .map(|(idx, c)| {
            let sym2: f64 = (0..grid.dim())
                .map(|a| grid.deriv_symbol(idx, a).powi(2))
                .sum();
            if sym2 == 0.0 {
                num_complex::Complex64::default()
            } else {
                c / (w_mean * sym2)
            }
        })
        .collect();
    ScalarField {
        grid: grid.clone(),
        values: grid.ifft(&out),
    }
}

/// Solve `-div(max(rho, floor) grad psi) = residual` for the zero-mean
/// potential psi with preconditioned conjugate gradients.
pub fn riesz_potential(
    rho: &ScalarField,
    residual: &ScalarField,
    floor: f64,
) -> Result<RieszSolve> {
    rho.grid.check_same(&residual.grid)?;
    if !(floor > 0.0) {
        return Err(param_err("floor", "must be positive"));
    }
    let w = rho.map(|v| v.max(floor));
    let w_min = w.min();
    let w_mean = w.values.iter().sum::<f64>() / w.values.len() as f64;

    let mut r = residual.clone();
    // compatibility: the data must be mean-free up to rounding
    let mean_defect = r.values.iter().sum::<f64>().abs() / r.values.len() as f64;
    let r_scale = r.l2_norm().max(1e-300);
    if mean_defect > 1e-8 * r_scale.max(1.0) {
        return Err(param_err(
            "residual",
            format!("not mean-free (defect {mean_defect:.3e}); no potential exists"),
        ));
    }
    subtract_mean(&mut r);

    let r_norm0 = r.l2_norm();
    let grid = &rho.grid;
    let mut psi = ScalarField::zeros(grid);
    if r_norm0 == 0.0 {
        return Ok(RieszSolve {
            psi,
            rel_residual: 0.0,
            iters: 0,
        });
    }

    let mut res = r.clone();
    let mut z = precondition(w_mean, &res);
    let mut p = z.clone();
    let mut rz = inner(&res, &z);
    let mut iters = 0;
    let mut rel = 1.0;
    while iters < CG_MAX_ITERS {
        let ap = apply_weighted_laplacian(&w, &p);
        let pap = inner(&p, &ap);
        if !(pap > 0.0) {
            return Err(DkwError::SolveFailed {
                iters,
                residual: rel,
                min_weight: w_min,
            });
        }
        let alpha = rz / pap;
        psi.axpy(alpha, &p);
        res.axpy(-alpha, &ap);
        iters += 1;
        rel = res.l2_norm() / r_norm0;
        if rel <= CG_TOL {
            break;
        }
        z = precondition(w_mean, &res);
        let rz_new = inner(&res, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        let mut p_new = z.clone();
        p_new.axpy(beta, &p);
        p = p_new;
    }
    if rel > CG_TOL {
        return Err(DkwError::SolveFailed {
            iters,
            residual: rel,
            min_weight: w_min,
        });
    }
    subtract_mean(&mut psi);
    Ok(RieszSolve {
        psi,
        rel_residual: rel,
        iters,
    })
}

/// Variational cost of a trajectory recovered slice by slice.
pub struct RateResult {
    pub total: f64,
    pub per_slice: Vec<f64>,
    pub cg_iters: Vec<usize>,
    pub max_rel_residual: f64,
}

/// Discrete residual of slice m: everything in the discrete update not
/// explained by diffusion and the deterministic drift, measured with the
/// same spectral operators the stepper uses.
fn slice_residual(
    rho_m: &ScalarField,
    rho_next: &ScalarField,
    dt: f64,
    cfg: &SolverConfig,
    kernel_field: Option<&VectorField>,
) -> Result<ScalarField> {
    let mut r = rho_next.clone();
    r.axpy(-1.0, rho_m);
    let mut r = r.map(|v| v / dt);
    r.axpy(-1.0, &rho_next.laplacian());

    let mut det_flux: Option<VectorField> = None;
    if let Some(vf) = kernel_field {
        let conv = crate::field::periodic_convolve(vf, rho_m)?;
        let sig = rho_m.map(|z| sigma(cfg.reg.eta, z));
        det_flux = Some(conv.scale_pointwise(&sig));
    }
    if cfg.eps > 0.0 {
        let n_k = cfg
            .noise
            .as_ref()
            .ok_or_else(|| param_err("noise", "eps > 0 requires a noise spec"))?
            .modes
            .n_k as f64;
        let spsq = rho_m.map(|z| {
            let sp = sigma_half_prime(cfg.reg.eta, z);
            sp * sp
        });
        let mut ito = rho_m.gradient().scale_pointwise(&spsq);
        ito.scale(-cfg.eps * n_k / 2.0);
        match &mut det_flux {
            Some(f) => f.axpy(1.0, &ito),
            None => det_flux = Some(ito),
        }
    }
    if let Some(f) = det_flux {
        r.axpy(1.0, &f.divergence());
    }
    subtract_mean(&mut r);
    Ok(r)
}

/// Recover the cost of a density path: per time slice, solve the weighted
/// elliptic problem for the potential psi and accumulate
/// `1/2 dt int max(rho, floor) |grad psi|^2`.
///
/// Needs every step stored (snapshot stride 1). `cfg` must be the
/// configuration the trajectory was produced with, so the discrete
/// residual matches the stepper exactly.
pub fn rate_par(traj: &Trajectory, kernel: &Kernel, cfg: &SolverConfig) -> Result<RateResult> {
    if traj.snapshot_stride != 1 {
        return Err(param_err(
            "trajectory",
            "path cost needs snapshot stride 1",
        ));
    }
    if traj.snapshots.len() < 2 {
        return Err(param_err("trajectory", "needs at least two snapshots"));
    }
    let kernel_field = prepare_kernel(kernel, cfg)?;
    let floor = traj.floor;
    let mut per_slice = Vec::new();
    let mut cg_iters = Vec::new();
    let mut max_rel: f64 = 0.0;
    let mut total = 0.0;
    for m in 0..traj.snapshots.len() - 1 {
        let rho_m = &traj.snapshots[m];
        let rho_next = &traj.snapshots[m + 1];
        let dt = traj.snapshot_dt(m);
        let r = slice_residual(rho_m, rho_next, dt, cfg, kernel_field.as_ref())?;
        // residual at rounding level relative to the time-difference scale:
        // nothing to represent, zero cost
        if r.l2_norm() <= 1e-9 * rho_m.l2_norm().max(1.0) / dt {
            per_slice.push(0.0);
            cg_iters.push(0);
            continue;
        }
        let solve = riesz_potential(rho_m, &r, floor)?;
        let w = rho_m.map(|v| v.max(floor));
        let cost = 0.5
            * dt
            * solve
                .psi
                .gradient()
                .norm_sq_pointwise()
                .values
                .iter()
                .zip(&w.values)
                .map(|(g2, wv)| g2 * wv)
                .sum::<f64>()
            * rho_m.grid.cell_volume();
        per_slice.push(cost);
        cg_iters.push(solve.iters);
        max_rel = max_rel.max(solve.rel_residual);
        total += cost;
    }
    Ok(RateResult {
        total,
        per_slice,
        cg_iters,
        max_rel_residual: max_rel,
    })
}

/// Distance `int_0^T ||u(t) - v(t)||_{L^1} dt` on matching snapshot meshes.
pub fn l1_in_time_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.times.len() != b.times.len() {
        return Err(param_err("trajectories", "snapshot meshes differ"));
    }
    let mut acc = 0.0;
    for i in 0..a.snapshots.len() {
        acc += a.snapshot_dt(i) * a.snapshots[i].l1_distance(&b.snapshots[i]);
    }
    Ok(acc)
}

/// Drive the skeleton with `g_m = g + amp sin(2 pi m t) e_0` for each
/// frequency m and report the path distance to the base run. The
/// perturbations converge weakly but not strongly to zero, so the distance
/// has to fall with m.
pub fn weak_convergence_experiment(
    rho0: &ScalarField,
    kernel: &Kernel,
    base: &ControlPath,
    amp: f64,
    freqs: &[u32],
    cfg: &SolverConfig,
) -> Result<Vec<(u32, f64)>> {
    let base_run = solve_skeleton(rho0, &ControlMode::Exogenous(base.clone()), kernel, cfg)?;
    let grid = &rho0.grid;
    let mut out = Vec::new();
    for &m in freqs {
        let mut steps = base.steps.clone();
        for (j, g) in steps.iter_mut().enumerate() {
            let t = j as f64 * base.dt;
            let osc = amp * (crate::grid::TWO_PI * m as f64 * t).sin();
            let mut bump = VectorField::zeros(grid);
            bump.components[0].iter_mut().for_each(|v| *v = osc);
            g.axpy(1.0, &bump);
        }
        let path = ControlPath {
            steps,
            dt: base.dt,
            bound: None,
        };
        let run = solve_skeleton(rho0, &ControlMode::Exogenous(path), kernel, cfg)?;
        out.push((m, l1_in_time_distance(&base_run.trajectory, &run.trajectory)?));
    }
    Ok(out)
}

/// Tail estimate at one noise intensity.
#[derive(Clone, Debug)]
pub struct TailEstimate {
    pub eps: f64,
    pub k_cutoff: u32,
    /// eps * K^{d+2}, the regime indicator.
    pub regime: f64,
    pub trials: usize,
    pub hits: usize,
    /// Runs ending in numerical blowup; counted as event occurrences.
    pub blowups: usize,
    /// `eps * ln(hits / trials)`; None when no trial hit (censored).
    pub estimate: Option<f64>,
    /// Delta-method band on the estimate.
    pub stderr: Option<f64>,
}

/// Monte Carlo estimator of `eps ln P(event)` along the joint scaling
/// `K(eps) = max(1, floor(eps^{-beta}))`. Trials are independent
/// substreams of one seed and run in parallel; results do not depend on
/// scheduling.
pub fn mc_tail<F>(
    rho0: &ScalarField,
    kernel: &Kernel,
    cfg_base: &SolverConfig,
    eps_list: &[f64],
    beta: f64,
    seed: u64,
    trials: usize,
    event: F,
) -> Result<Vec<TailEstimate>>
where
    F: Fn(&Trajectory) -> bool + Sync,
{
    if trials == 0 {
        return Err(param_err("trials", "must be positive"));
    }
    let d = rho0.grid.dim();
    let mut out = Vec::new();
    for &eps in eps_list {
        let (k, regime) = scaling_k(eps, beta, d)?;
        let modes = build_modes(d, k);
        let results: Vec<std::result::Result<bool, bool>> = (0..trials)
            .into_par_iter()
            .map(|trial| {
                let mut cfg = cfg_base.clone();
                cfg.eps = eps;
                cfg.noise = Some(NoiseSpec {
                    modes: modes.clone(),
                    seed,
                    stream_id: trial as u64,
                });
                match solve_spde(rho0, kernel, &cfg) {
                    Ok(run) => Ok(event(&run.trajectory)),
                    Err(DkwError::Blowup { .. }) => Err(true),
                    Err(_) => Err(false),
                }
            })
            .collect();
        let mut hits = 0usize;
        let mut blowups = 0usize;
        for r in &results {
            match r {
                Ok(true) => hits += 1,
                Ok(false) => {}
                Err(true) => {
                    hits += 1;
                    blowups += 1;
                }
                Err(false) => {
                    return Err(param_err("mc", "a trial failed for a non-blowup reason"))
                }
            }
        }
        let (estimate, stderr) = if hits == 0 {
            (None, None)
        } else {
            let p = hits as f64 / trials as f64;
            let se_logp = ((1.0 - p) / (trials as f64 * p)).sqrt();
            (Some(eps * p.ln()), Some(eps * se_logp))
        };
        out.push(TailEstimate {
            eps,
            k_cutoff: k,
            regime,
            trials,
            hits,
            blowups,
            estimate,
            stderr,
        });
    }
    Ok(out)
}

/// Tube-exit event: the path leaves the L^2 ball of radius `radius` around
/// the reference path at some snapshot time.
pub fn tube_exit_event<'a>(
    reference: &'a Trajectory,
    radius: f64,
) -> impl Fn(&Trajectory) -> bool + Sync + 'a {
    move |traj: &Trajectory| {
        traj.snapshots
            .iter()
            .zip(&reference.snapshots)
            .any(|(a, b)| {
                let mut diff = a.clone();
                diff.axpy(-1.0, b);
                diff.l2_norm() > radius
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, TWO_PI};
    use crate::kernel::kernel_zero;
    use crate::solver::solve_controlled;

    #[test]
    fn forward_cost_of_known_control() {
        // g = c e_0 constant: cost = 1/2 c^2 T
        let g = make_grid(1, 16).unwrap();
        let c = 0.7;
        let path = ControlPath::from_fn(&g, 50, 1e-3, |_, _, a| if a == 0 { c } else { 0.0 });
        let want = 0.5 * c * c * 0.05;
        assert!((rate_forward(&path) - want).abs() <= 1e-12);
    }

    /// Dense direct solve of the weighted elliptic problem by assembling
    /// the operator columnwise; the oracle for the CG path.
    fn dense_oracle(w: &ScalarField, r: &ScalarField) -> ScalarField {
        let grid = &w.grid;
        let n = grid.len();
        // columns of A, plus rank-one pins on its null space (the constant
        // and, since the derivative symbol zeroes the Nyquist frequency,
        // the alternating d=1 Nyquist vector) to make the matrix invertible
        let mut a = vec![vec![0.0f64; n]; n];
        for j in 0..n {
            let mut e = ScalarField::zeros(grid);
            e.values[j] = 1.0;
            let col = apply_weighted_laplacian(w, &e);
            let nyq_j = if j % 2 == 0 { 1.0 } else { -1.0 };
            for i in 0..n {
                let nyq_i = if i % 2 == 0 { 1.0 } else { -1.0 };
                a[i][j] = col.values[i] + (1.0 + nyq_i * nyq_j) / n as f64;
            }
        }
        let mut rhs = r.values.clone();
        // gaussian elimination with partial pivoting
        let mut m = a;
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
                .unwrap();
            m.swap(col, piv);
            rhs.swap(col, piv);
            let p = m[col][col];
            for i in col + 1..n {
                let f = m[i][col] / p;
                for k in col..n {
                    m[i][k] -= f * m[col][k];
                }
                rhs[i] -= f * rhs[col];
            }
        }
        let mut x = vec![0.0f64; n];
        for i in (0..n).rev() {
            let mut s = rhs[i];
            for k in i + 1..n {
                s -= m[i][k] * x[k];
            }
            x[i] = s / m[i][i];
        }
        let mut psi = ScalarField {
            grid: grid.clone(),
            values: x,
        };
        subtract_mean(&mut psi);
        psi
    }

    #[test]
    fn cg_matches_dense_solve() {
        let g = make_grid(1, 16).unwrap();
        let rho = ScalarField::from_fn(&g, |x| 1.0 + 0.6 * (TWO_PI * x[0]).sin());
        let mut r = ScalarField::from_fn(&g, |x| {
            (TWO_PI * x[0]).cos() + 0.3 * (2.0 * TWO_PI * x[0]).sin()
        });
        subtract_mean(&mut r);
        let solve = riesz_potential(&rho, &r, 1e-12).unwrap();
        let w = rho.map(|v| v.max(1e-12));
        let oracle = dense_oracle(&w, &r);
        let err = solve.psi.l1_distance(&oracle);
        assert!(err <= 1e-6, "cg vs dense: {err}");
        // residual check
        let back = apply_weighted_laplacian(&w, &solve.psi);
        assert!(back.l1_distance(&r) <= 1e-6 * r.l2_norm().max(1.0));
    }

    #[test]
    fn riesz_rejects_non_mean_free_data() {
        let g = make_grid(1, 16).unwrap();
        let rho = ScalarField::constant(&g, 1.0);
        let r = ScalarField::constant(&g, 1.0);
        assert!(riesz_potential(&rho, &r, 1e-12).is_err());
    }

    #[test]
    fn drift_gradient_cost_matches_forward() {
        // g = sqrt(rho) grad(phi): the recovered cost must agree with the
        // forward cost of the realized control up to the regularization gap
        let g = make_grid(1, 32).unwrap();
        let rho0 = ScalarField::from_fn(&g, |x| 1.0 + 0.4 * (TWO_PI * x[0]).cos());
        let phi = ScalarField::from_fn(&g, |x| 0.3 * (TWO_PI * x[0]).sin());
        let mut cfg = SolverConfig::deterministic(0.01, 1e-4);
        cfg.reg.eta = 0.01;
        let kernel = kernel_zero(&g);
        let run = solve_controlled(&rho0, &kernel, &ControlMode::DriftGradient(phi), &cfg)
            .unwrap();
        let fwd = rate_forward(&run.control);
        let par = rate_par(&run.trajectory, &kernel, &cfg).unwrap();
        assert!(par.total <= fwd * (1.0 + 1e-6), "par {} fwd {}", par.total, fwd);
        let rel = (fwd - par.total).abs() / fwd;
        assert!(rel <= 0.05, "relative gap {rel}");
    }

    #[test]
    fn zero_control_zero_cost() {
        let g = make_grid(1, 32).unwrap();
        let rho0 = ScalarField::from_fn(&g, |x| 1.0 + 0.4 * (TWO_PI * x[0]).cos());
        let cfg = SolverConfig::deterministic(0.01, 1e-4);
        let kernel = kernel_zero(&g);
        let run = solve_skeleton(&rho0, &ControlMode::None, &kernel, &cfg).unwrap();
        let par = rate_par(&run.trajectory, &kernel, &cfg).unwrap();
        assert!(
            par.total <= 1e-10,
            "uncontrolled path must cost nothing, got {}",
            par.total
        );
    }
}
