//! Semi-implicit time integration of the conservative interacting-diffusion
//! dynamics: the deterministic controlled (skeleton) equation, the noisy
//! equation in Ito form, and the noisy controlled equation, all through one
//! stepper.
//!
//! The Laplacian is treated implicitly in spectral space; the nonlocal
//! drift, control, Ito correction and noise terms are explicit and
//! assembled in divergence form, so the discrete mass update is exactly
//! zero and L^1 conservation holds pathwise to rounding.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{param_err, DkwError, Result};
use crate::field::{periodic_convolve, ScalarField, VectorField};
use crate::grid::TorusGrid;
use crate::kernel::{mollify_kernel, Kernel, KernelSpec};
use crate::noise::{project_control, sample_increment, NoiseSpec};
use crate::reg::{entropy, sigma_half, sigma_half_prime, RegParams};

/// How negative undershoots are handled. Clamping breaks exact
/// conservation, so observation is the default.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Positivity {
    ObserveOnly,
    ClampReport,
}

/// Time-discrete control: one vector field per step.
#[derive(Clone, Debug)]
pub struct ControlPath {
    pub steps: Vec<VectorField>,
    pub dt: f64,
    /// Optional energy cap (the class A_N).
    pub bound: Option<f64>,
}

impl ControlPath {
    pub fn zero(grid: &Arc<TorusGrid>, nsteps: usize, dt: f64) -> Self {
        ControlPath {
            steps: (0..nsteps).map(|_| VectorField::zeros(grid)).collect(),
            dt,
            bound: None,
        }
    }

    /// Sample g(x, t, component) on the step mesh (left endpoints).
    pub fn from_fn(
        grid: &Arc<TorusGrid>,
        nsteps: usize,
        dt: f64,
        f: impl Fn(&[f64], f64, usize) -> f64,
    ) -> Self {
        let steps = (0..nsteps)
            .map(|m| {
                let t = m as f64 * dt;
                VectorField::from_fn(grid, |x, a| f(x, t, a))
            })
            .collect();
        ControlPath {
            steps,
            dt,
            bound: None,
        }
    }

    /// Total control energy, the time-space quadrature of |g|^2 (no 1/2).
    pub fn energy(&self) -> f64 {
        self.dt * self.steps.iter().map(|g| g.l2_norm_sq()).sum::<f64>()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(n) = self.bound {
            let e = self.energy();
            if e > n + 1e-12 {
                return Err(param_err(
                    "control",
                    format!("energy {e} exceeds the declared bound {n}"),
                ));
            }
        }
        Ok(())
    }
}

/// Control term selection for a run.
#[derive(Clone, Debug)]
pub enum ControlMode {
    None,
    /// Exogenous path g(t, x).
    Exogenous(ControlPath),
    /// Effective g = sqrt(rho) grad(phi) with a static potential phi.
    DriftGradient(ScalarField),
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    /// Final time.
    pub t_final: f64,
    pub dt: f64,
    pub reg: RegParams,
    /// Kernel mollification width; 0 disables (smooth kernels only).
    pub gamma: f64,
    /// Noise intensity in [0,1); 0 means deterministic.
    pub eps: f64,
    pub noise: Option<NoiseSpec>,
    pub snapshot_stride: usize,
    pub positivity: Positivity,
}

impl SolverConfig {
    pub fn deterministic(t_final: f64, dt: f64) -> Self {
        SolverConfig {
            t_final,
            dt,
            reg: RegParams::default(),
            gamma: 0.0,
            eps: 0.0,
            noise: None,
            snapshot_stride: 1,
            positivity: Positivity::ObserveOnly,
        }
    }

    pub fn nsteps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn validate(&self, grid: &TorusGrid) -> Result<Vec<String>> {
        if !(self.dt > 0.0) {
            return Err(param_err("dt", "must be positive"));
        }
        let steps = self.t_final / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(param_err("dt", "T/dt must be an integer"));
        }
        self.reg.validate()?;
        if !(0.0..1.0).contains(&self.eps) {
            return Err(param_err("eps", "must lie in [0,1)"));
        }
        if self.eps > 0.0 && self.noise.is_none() {
            return Err(param_err("noise", "eps > 0 requires a noise spec"));
        }
        if self.snapshot_stride == 0 {
            return Err(param_err("snapshot_stride", "must be >= 1"));
        }
        let mut warnings = Vec::new();
        let h = grid.spacing();
        let n_k = self.noise.as_ref().map(|n| n.modes.n_k as f64).unwrap_or(0.0);
        let limit = 0.25 * h * h / (1.0 + self.eps * n_k / (8.0 * self.reg.floor.max(1e-3)));
        if self.dt > limit {
            warnings.push(format!(
                "dt = {} exceeds the explicit-term stability heuristic {:.3e}",
                self.dt, limit
            ));
        }
        Ok(warnings)
    }
}

/// Per-step scalar diagnostics.
#[derive(Clone, Copy, Debug)]
pub struct StepRecord {
    pub t: f64,
    pub mass: f64,
    pub min: f64,
    pub max: f64,
    pub entropy: f64,
    /// Cumulative sum of ||grad sqrt(rho)||^2_{L^2} * dt up to t.
    pub dissipation_cum: f64,
    pub l2: f64,
}

/// Time-indexed density snapshots plus recorded scalars.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<ScalarField>,
    pub records: Vec<StepRecord>,
    pub dt: f64,
    pub snapshot_stride: usize,
    pub eta: f64,
    pub gamma: f64,
    pub floor: f64,
    /// Mass removed by clamping, when positivity = ClampReport.
    pub clamped_mass: f64,
}

impl Trajectory {
    pub fn initial(&self) -> &ScalarField {
        &self.snapshots[0]
    }

    pub fn final_snapshot(&self) -> &ScalarField {
        self.snapshots.last().unwrap()
    }

    /// Left-rule quadrature weight of snapshot i (0 for the last snapshot).
    pub fn snapshot_dt(&self, i: usize) -> f64 {
        if i + 1 < self.times.len() {
            self.times[i + 1] - self.times[i]
        } else {
            0.0
        }
    }

    pub fn mass_drift(&self) -> f64 {
        let m0 = self.records[0].mass;
        self.records
            .iter()
            .map(|r| (r.mass - m0).abs())
            .fold(0.0, f64::max)
    }
}

/// Output of one run: the trajectory and the realized control path (empty
/// fields for uncontrolled runs).
pub struct SolveOutput {
    pub trajectory: Trajectory,
    pub control: ControlPath,
    pub warnings: Vec<String>,
}

/// One semi-implicit update. The diffusion is implicit in spectral space;
/// drift, control, Ito correction and noise are explicit, all in
/// divergence form.
pub fn step(
    rho: &ScalarField,
    cfg: &SolverConfig,
    kernel_field: Option<&VectorField>,
    g_t: Option<&VectorField>,
    noise_increment: Option<&VectorField>,
) -> Result<ScalarField> {
    let grid = &rho.grid;
    let eta = cfg.reg.eta;
    let dt = cfg.dt;

    let sigma_half_field = rho.map(|z| sigma_half(eta, z));

    // flux collects everything under one divergence, scaled so the update
    // is rho_new = implicit_heat(rho - div(flux)).
    let mut flux: Option<VectorField> = None;
    let mut add_flux = |f: VectorField| match &mut flux {
        Some(acc) => acc.axpy(1.0, &f),
        None => flux = Some(f),
    };

    if let Some(vf) = kernel_field {
        vf.grid.check_same(grid)?;
        let conv = periodic_convolve(vf, rho)?;
        let sigma_field = sigma_half_field.map(|s| s * s);
        let mut drift = conv.scale_pointwise(&sigma_field);
        drift.scale(dt);
        add_flux(drift);
    }

    if let Some(g) = g_t {
        g.grid.check_same(grid)?;
        let mut ctrl = g.scale_pointwise(&sigma_half_field);
        ctrl.scale(dt);
        add_flux(ctrl);
    }

    if cfg.eps > 0.0 {
        let n_k = cfg
            .noise
            .as_ref()
            .ok_or_else(|| param_err("noise", "eps > 0 requires a noise spec"))?
            .modes
            .n_k as f64;
        // Ito correction -(eps N_K / 2) |sigma'|^2 grad rho inside the flux
        let spsq = rho.map(|z| {
            let sp = sigma_half_prime(eta, z);
            sp * sp
        });
        let mut ito = rho.gradient().scale_pointwise(&spsq);
        ito.scale(-dt * cfg.eps * n_k / 2.0);
        add_flux(ito);

        if let Some(dxi) = noise_increment {
            dxi.grid.check_same(grid)?;
            let mut noise = dxi.scale_pointwise(&sigma_half_field);
            noise.scale(cfg.eps.sqrt());
            add_flux(noise);
        }
    }

    // explicit increment, exactly mean-free
    let mut incr = match flux {
        Some(f) => {
            let mut div = f.divergence();
            let mean = div.values.iter().sum::<f64>() / div.values.len() as f64;
            for v in div.values.iter_mut() {
                *v = -(*v - mean);
            }
            div
        }
        None => ScalarField::zeros(grid),
    };

    incr.axpy(1.0, rho);
    let spec = grid.fft(&incr.values);
    let updated: Vec<Complex64> = spec
        .iter()
        .enumerate()
        .map(|(idx, c)| {
            let sym2: f64 = (0..grid.dim())
                .map(|a| grid.deriv_symbol(idx, a).powi(2))
                .sum();
            c / (1.0 + dt * sym2)
        })
        .collect();
    let out = ScalarField {
        grid: grid.clone(),
        values: grid.ifft(&updated),
    };
    if !out.is_finite() {
        return Err(DkwError::Blowup { step: 0, t: 0.0 });
    }
    Ok(out)
}

pub(crate) fn prepare_kernel(kernel: &Kernel, cfg: &SolverConfig) -> Result<Option<VectorField>> {
    if let KernelSpec::Zero = kernel.spec {
        return Ok(None);
    }
    let singular = matches!(kernel.spec, KernelSpec::PowerLaw { .. });
    if cfg.gamma > 0.0 {
        if kernel.gamma > 0.0 {
            // already mollified at construction
            return Ok(Some(kernel.field.clone()));
        }
        return Ok(Some(mollify_kernel(kernel, cfg.gamma)?.field));
    }
    if singular && kernel.gamma == 0.0 {
        return Err(param_err(
            "gamma",
            "singular kernels require a positive mollification width",
        ));
    }
    Ok(Some(kernel.field.clone()))
}

/// Unified driver behind the public solve entry points.
pub fn solve(
    rho0: &ScalarField,
    kernel: &Kernel,
    mode: &ControlMode,
    cfg: &SolverConfig,
) -> Result<SolveOutput> {
    let grid = rho0.grid.clone();
    let warnings = cfg.validate(&grid)?;
    if rho0.min() < -cfg.reg.floor.max(1e-10) {
        return Err(param_err("rho0", "initial density must be nonnegative"));
    }
    let kernel_field = prepare_kernel(kernel, cfg)?;
    let nsteps = cfg.nsteps();
    let dt = cfg.dt;

    // exogenous controls are projected onto the noise band when one exists
    let projected: Option<ControlPath> = match mode {
        ControlMode::Exogenous(path) => {
            if path.steps.len() != nsteps {
                return Err(param_err(
                    "control",
                    format!("path has {} steps, solver needs {nsteps}", path.steps.len()),
                ));
            }
            path.validate()?;
            let projected_steps = match &cfg.noise {
                Some(spec) => path
                    .steps
                    .iter()
                    .map(|g| project_control(g, &spec.modes))
                    .collect(),
                None => path.steps.clone(),
            };
            Some(ControlPath {
                steps: projected_steps,
                dt,
                bound: path.bound,
            })
        }
        _ => None,
    };
    let grad_phi: Option<VectorField> = match mode {
        ControlMode::DriftGradient(phi) => {
            phi.grid.check_same(&grid)?;
            Some(phi.gradient())
        }
        _ => None,
    };

    let mut rho = rho0.clone();
    let mut records = Vec::with_capacity(nsteps + 1);
    let mut snapshots = Vec::new();
    let mut times = Vec::new();
    let mut realized: Vec<VectorField> = Vec::new();
    let mut diss_cum = 0.0;
    let mut clamped_mass = 0.0;

    let record_state = |rho: &ScalarField, t: f64, diss_cum: f64| StepRecord {
        t,
        mass: rho.mass(),
        min: rho.min(),
        max: rho.max(),
        entropy: entropy(rho, cfg.reg.floor),
        dissipation_cum: diss_cum,
        l2: rho.l2_norm(),
    };

    for m in 0..=nsteps {
        let t = m as f64 * dt;
        records.push(record_state(&rho, t, diss_cum));
        if m % cfg.snapshot_stride == 0 || m == nsteps {
            snapshots.push(rho.clone());
            times.push(t);
        }
        if m == nsteps {
            break;
        }

        let g_t: Option<VectorField> = match (&projected, &grad_phi) {
            (Some(path), _) => Some(path.steps[m].clone()),
            (_, Some(gp)) => {
                let sqrt_rho = rho.map(|z| z.max(0.0).sqrt());
                Some(gp.scale_pointwise(&sqrt_rho))
            }
            _ => None,
        };

        let dxi = match (&cfg.noise, cfg.eps > 0.0) {
            (Some(spec), true) => Some(sample_increment(spec, &grid, dt, m as u64)),
            _ => None,
        };

        let mut next = step(&rho, cfg, kernel_field.as_ref(), g_t.as_ref(), dxi.as_ref())
            .map_err(|e| match e {
                DkwError::Blowup { .. } => DkwError::Blowup { step: m, t },
                other => other,
            })?;

        if cfg.positivity == Positivity::ClampReport {
            for v in next.values.iter_mut() {
                if *v < 0.0 {
                    clamped_mass += -*v * grid.cell_volume();
                    *v = 0.0;
                }
            }
        }

        // right-rule dissipation quadrature: by convexity of the entropy
        // density the discrete balance entropy(t) + 4 * diss_cum(t) is then
        // non-increasing for pure diffusion
        diss_cum += next.grad_sqrt(cfg.reg.floor).l2_norm_sq() * dt;

        if let Some(g) = g_t {
            realized.push(g);
        }
        rho = next;
    }

    let control = if realized.is_empty() {
        ControlPath::zero(&grid, 0, dt)
    } else {
        ControlPath {
            steps: realized,
            dt,
            bound: match mode {
                ControlMode::Exogenous(p) => p.bound,
                _ => None,
            },
        }
    };

    Ok(SolveOutput {
        trajectory: Trajectory {
            times,
            snapshots,
            records,
            dt,
            snapshot_stride: cfg.snapshot_stride,
            eta: cfg.reg.eta,
            gamma: cfg.gamma,
            floor: cfg.reg.floor,
            clamped_mass,
        },
        control,
        warnings,
    })
}

/// Deterministic controlled equation (eps = 0).
pub fn solve_skeleton(
    rho0: &ScalarField,
    control: &ControlMode,
    kernel: &Kernel,
    cfg: &SolverConfig,
) -> Result<SolveOutput> {
    if cfg.eps != 0.0 {
        return Err(param_err("eps", "skeleton runs require eps = 0"));
    }
    solve(rho0, kernel, control, cfg)
}

/// One sample path of the noisy equation (no control).
pub fn solve_spde(rho0: &ScalarField, kernel: &Kernel, cfg: &SolverConfig) -> Result<SolveOutput> {
    if !(cfg.eps > 0.0) {
        return Err(param_err("eps", "spde runs require eps in (0,1)"));
    }
    solve(rho0, kernel, &ControlMode::None, cfg)
}

/// Noisy controlled equation; with eps = 0 this reduces to the skeleton
/// driven by the band-projected control.
pub fn solve_controlled(
    rho0: &ScalarField,
    kernel: &Kernel,
    control: &ControlMode,
    cfg: &SolverConfig,
) -> Result<SolveOutput> {
    solve(rho0, kernel, control, cfg)
}
