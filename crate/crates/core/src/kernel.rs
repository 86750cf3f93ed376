//! Interaction kernels V with their integrability exponents, mollification,
//! and the empirical check of the Ladyzhenskaya-Prodi-Serrin type
//! assumptions.
//!
//! Grid norms of a singular kernel are always finite, so the assumption
//! check is a refinement-trend test: the kernel is rebuilt on a doubled
//! grid and the norm growth factor decides pass/fail.

use std::sync::Arc;

use crate::error::{param_err, Result};
use crate::field::{periodic_convolve_scalar, ScalarField, VectorField};
use crate::grid::{make_grid, TorusGrid, TWO_PI};

/// Integrability exponents (p, p*, q, q*) attached to a kernel.
#[derive(Clone, Copy, Debug)]
pub struct LpsExponents {
    pub p: f64,
    pub p_star: f64,
    pub q: f64,
    pub q_star: f64,
}

impl LpsExponents {
    /// The two exponent inequalities: d/p + 2/p* <= 1 with 2 <= p* < inf
    /// and d < p <= inf, and d/(2q) + 1/q* <= 1 with 1 <= q* < inf and
    /// d/2 < q <= inf.
    pub fn satisfies(&self, d: usize) -> (bool, bool) {
        let d = d as f64;
        let a1 = d / self.p + 2.0 / self.p_star <= 1.0 + 1e-12
            && self.p_star >= 2.0
            && self.p_star.is_finite()
            && self.p > d;
        let a2 = d / (2.0 * self.q) + 1.0 / self.q_star <= 1.0 + 1e-12
            && self.q_star >= 1.0
            && self.q_star.is_finite()
            && self.q > d / 2.0;
        (a1, a2)
    }
}

/// One Fourier mode of a smooth kernel: `sin(2 pi k.x) sin_amp + cos(2 pi k.x) cos_amp`.
#[derive(Clone, Debug)]
pub struct FourierMode {
    pub k: Vec<i64>,
    pub sin_amp: Vec<f64>,
    pub cos_amp: Vec<f64>,
}

/// Construction recipe; kept so a kernel can be re-evaluated on a finer
/// grid for the refinement-trend check.
#[derive(Clone, Debug)]
pub enum KernelSpec {
    Zero,
    SmoothFourier(Vec<FourierMode>),
    PowerLaw { alpha: f64, sign: f64 },
}

/// Interaction kernel: sampled field, exponents, and its recipe.
#[derive(Clone, Debug)]
pub struct Kernel {
    pub field: VectorField,
    pub exponents: LpsExponents,
    pub label: String,
    pub spec: KernelSpec,
    /// Mollification width used to build `field`; 0 means none.
    pub gamma: f64,
}

impl Kernel {
    pub fn grid(&self) -> &Arc<TorusGrid> {
        &self.field.grid
    }
}

/// The zero kernel; all dynamics reduce to the heat equation.
pub fn kernel_zero(grid: &Arc<TorusGrid>) -> Kernel {
    Kernel {
        field: VectorField::zeros(grid),
        exponents: LpsExponents {
            p: f64::INFINITY,
            p_star: 2.0,
            q: f64::INFINITY,
            q_star: 1.0,
        },
        label: "zero".into(),
        spec: KernelSpec::Zero,
        gamma: 0.0,
    }
}

fn eval_modes(grid: &Arc<TorusGrid>, modes: &[FourierMode]) -> VectorField {
    VectorField::from_fn(grid, |x, a| {
        modes
            .iter()
            .map(|m| {
                let phase =
                    TWO_PI * m.k.iter().zip(x).map(|(&ki, xi)| ki as f64 * xi).sum::<f64>();
                phase.sin() * m.sin_amp[a] + phase.cos() * m.cos_amp[a]
            })
            .sum()
    })
}

/// Band-limited smooth test kernel from an explicit mode list.
pub fn kernel_smooth_fourier(grid: &Arc<TorusGrid>, modes: Vec<FourierMode>) -> Result<Kernel> {
    let band = grid.n() as i64 / 2;
    for m in &modes {
        if m.k.len() != grid.dim() || m.sin_amp.len() != grid.dim() || m.cos_amp.len() != grid.dim()
        {
            return Err(param_err("modes", "component count must equal d"));
        }
        if m.k.iter().any(|&ki| ki < -band || ki >= band) {
            return Err(param_err(
                "modes",
                format!("mode {:?} outside the grid band [-{band},{band})", m.k),
            ));
        }
    }
    Ok(Kernel {
        field: eval_modes(grid, &modes),
        exponents: LpsExponents {
            p: f64::INFINITY,
            p_star: 2.0,
            q: f64::INFINITY,
            q_star: 1.0,
        },
        label: "smooth-fourier".into(),
        spec: KernelSpec::SmoothFourier(modes),
        gamma: 0.0,
    })
}

/// Signed minimal periodic displacement of a coordinate in [-1/2, 1/2).
fn periodic_disp(x: f64) -> f64 {
    let y = x - x.round();
    if y == 0.5 {
        -0.5
    } else {
        y
    }
}

fn eval_power_law(grid: &Arc<TorusGrid>, alpha: f64, sign: f64) -> VectorField {
    let mut v = VectorField::from_fn(grid, |x, a| {
        let disp: Vec<f64> = x.iter().map(|&xi| periodic_disp(xi)).collect();
        let r = disp.iter().map(|d| d * d).sum::<f64>().sqrt();
        if r == 0.0 {
            0.0
        } else {
            sign * disp[a] / r.powf(1.0 + alpha)
        }
    });
    // origin node zeroed, the V(0) = 0 particle-system convention
    for c in v.components.iter_mut() {
        c[0] = 0.0;
    }
    v
}

/// Singular power-law kernel `V(x) = sign * x / |x|^{1 + alpha}` in d = 2,
/// with the origin node zeroed. Exponents carry a 5% margin below the
/// integrability thresholds `p < d/alpha`, `q < d/(1+alpha)`... the time
/// exponents are chosen to meet the inequalities for a static kernel.
pub fn kernel_power_law(grid: &Arc<TorusGrid>, alpha: f64, sign: f64) -> Result<Kernel> {
    if grid.dim() != 2 {
        return Err(param_err("d", "power-law kernel is defined for d = 2"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(param_err("alpha", "must lie in (0,1)"));
    }
    let d = grid.dim() as f64;
    let margin = 0.05;
    let p = (d / alpha) * (1.0 - margin);
    let q = (d / (1.0 + alpha)) * (1.0 - margin);
    // static kernel: pick the smallest admissible time exponents
    let p_star = if p > d { (2.0 / (1.0 - d / p)).max(2.0) } else { f64::INFINITY };
    let q_star = if q > d / 2.0 { (1.0 / (1.0 - d / (2.0 * q))).max(1.0) } else { f64::INFINITY };
    Ok(Kernel {
        field: eval_power_law(grid, alpha, sign),
        exponents: LpsExponents { p, p_star, q, q_star },
        label: format!("power-law(alpha={alpha},sign={sign})"),
        spec: KernelSpec::PowerLaw { alpha, sign },
        gamma: 0.0,
    })
}

/// Rebuild a kernel's field from its recipe on another grid (mollification
/// width preserved).
pub fn rebuild_on(kernel: &Kernel, grid: &Arc<TorusGrid>) -> Result<Kernel> {
    let base = match &kernel.spec {
        KernelSpec::Zero => kernel_zero(grid),
        KernelSpec::SmoothFourier(modes) => kernel_smooth_fourier(grid, modes.clone())?,
        KernelSpec::PowerLaw { alpha, sign } => kernel_power_law(grid, *alpha, *sign)?,
    };
    if kernel.gamma > 0.0 {
        mollify_kernel(&base, kernel.gamma)
    } else {
        Ok(Kernel {
            exponents: kernel.exponents,
            label: kernel.label.clone(),
            ..base
        })
    }
}

/// Normalized compactly supported bump of width `gamma` on the lattice.
fn bump_field(grid: &Arc<TorusGrid>, gamma: f64) -> ScalarField {
    let mut b = ScalarField::from_fn(grid, |x| {
        let r2: f64 = x
            .iter()
            .map(|&xi| {
                let d = periodic_disp(xi) / gamma;
                d * d
            })
            .sum();
        if r2 >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - r2)).exp()
        }
    });
    let mass = b.mass();
    if mass > 0.0 {
        for v in b.values.iter_mut() {
            *v /= mass;
        }
    }
    b
}

/// Spatial mollification with the bump of width `gamma`. L^p norms are
/// non-increasing; the sup norm obeys `||V^g||_inf <= ||bump||_inf / ... * ||V||_1`
/// at the spatial rate gamma^{-d}.
pub fn mollify_kernel(kernel: &Kernel, gamma: f64) -> Result<Kernel> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(param_err("gamma", "must lie in (0,1)"));
    }
    let grid = kernel.grid();
    let bump = bump_field(grid, gamma);
    // convolve each component with the bump: h^d sum bump(x-y) V(y)
    let mut smoothed = VectorField::zeros(grid);
    for a in 0..grid.dim() {
        let comp = ScalarField {
            grid: grid.clone(),
            values: kernel.field.components[a].clone(),
        };
        smoothed.components[a] = periodic_convolve_scalar(&bump, &comp)?.values;
    }
    Ok(Kernel {
        field: smoothed,
        exponents: kernel.exponents,
        label: format!("{}^gamma={gamma}", kernel.label),
        spec: kernel.spec.clone(),
        gamma,
    })
}

/// Outcome of the empirical assumption check.
#[derive(Clone, Debug)]
pub struct AssumptionReport {
    pub lp_norm_v: f64,
    pub lq_norm_div_v: f64,
    /// Same norms on the doubled grid.
    pub lp_norm_v_refined: f64,
    pub lq_norm_div_v_refined: f64,
    pub growth_factor_v: f64,
    pub growth_factor_div: f64,
    pub a1_exponents_ok: bool,
    pub a2_exponents_ok: bool,
    pub trend_ok: bool,
    pub pass: bool,
}

/// Growth factor threshold under grid doubling for the trend to count as
/// bounded.
pub const TREND_GROWTH_LIMIT: f64 = 1.2;

/// Empirical check of the kernel assumptions: exponent inequalities plus a
/// bounded refinement trend of the grid norms under doubling.
pub fn check_lps(kernel: &Kernel, grid: &Arc<TorusGrid>) -> Result<AssumptionReport> {
    let coarse = rebuild_on(kernel, grid)?;
    let fine_grid = make_grid(grid.dim(), grid.n() * 2)?;
    let fine = rebuild_on(kernel, &fine_grid)?;

    // grid surrogates: cap large (or infinite) exponents, floor degenerate
    // ones at 1 so the quadrature norm stays defined
    let p = kernel.exponents.p.clamp(1.0, 64.0);
    let q = kernel.exponents.q.clamp(1.0, 64.0);
    let lp = coarse.field.lp_norm(p);
    let lp_f = fine.field.lp_norm(p);
    let div = coarse.field.divergence();
    let div_f = fine.field.divergence();
    let lq = div.lp_norm(q);
    let lq_f = div_f.lp_norm(q);

    let gf_v = if lp > 0.0 { lp_f / lp } else { 1.0 };
    let gf_d = if lq > 0.0 { lq_f / lq } else { 1.0 };
    let (a1, a2) = kernel.exponents.satisfies(grid.dim());
    let trend_ok = gf_v < TREND_GROWTH_LIMIT && gf_d < TREND_GROWTH_LIMIT;
    Ok(AssumptionReport {
        lp_norm_v: lp,
        lq_norm_div_v: lq,
        lp_norm_v_refined: lp_f,
        lq_norm_div_v_refined: lq_f,
        growth_factor_v: gf_v,
        growth_factor_div: gf_d,
        a1_exponents_ok: a1,
        a2_exponents_ok: a2,
        trend_ok,
        pass: a1 && a2 && trend_ok,
    })
}

/// Grid L^p norm of the kernel rebuilt at resolution `n`; used by the
/// refinement sweeps.
pub fn lp_norm_at(kernel: &Kernel, d: usize, n: usize, p: f64) -> Result<f64> {
    let grid = make_grid(d, n)?;
    let k = rebuild_on(kernel, &grid)?;
    Ok(k.field.lp_norm(p))
}

impl std::fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "lps check: {}", if self.pass { "PASS" } else { "FAIL" })?;
        writeln!(
            f,
            "  |V|_Lp = {:.6e} -> {:.6e} (x{:.3})",
            self.lp_norm_v, self.lp_norm_v_refined, self.growth_factor_v
        )?;
        writeln!(
            f,
            "  |div V|_Lq = {:.6e} -> {:.6e} (x{:.3})",
            self.lq_norm_div_v, self.lq_norm_div_v_refined, self.growth_factor_div
        )?;
        write!(
            f,
            "  exponents: A1 {} A2 {}, trend {}",
            self.a1_exponents_ok, self.a2_exponents_ok, self.trend_ok
        )
    }
}
