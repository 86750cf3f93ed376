//! Scalar regularization and truncation devices: the smooth square-root
//! family sigma^{1/2,eta}, the entropy density Psi, the piecewise-linear
//! window zeta^M, the truncated log, the positivity cutoff h_delta and the
//! path metric D built from it.

use crate::error::{param_err, Result};
use crate::field::ScalarField;
use crate::solver::Trajectory;

/// Scales shared by the regularized coefficients.
#[derive(Clone, Copy, Debug)]
pub struct RegParams {
    /// sigma-regularization scale in (0,1).
    pub eta: f64,
    /// Positivity floor for logs and square roots.
    pub floor: f64,
}

impl Default for RegParams {
    fn default() -> Self {
        RegParams {
            eta: 0.01,
            floor: 1e-12,
        }
    }
}

impl RegParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(param_err("eta", "must lie in (0,1)"));
        }
        if self.floor <= 0.0 {
            return Err(param_err("floor", "must be positive"));
        }
        Ok(())
    }
}

/// Smooth square-root approximation
/// `sigma^{1/2,eta}(z) = (1/eta) tanh(eta s)` with `s = sqrt(z + eta^2) - eta`,
/// extended by zero for z < 0.
///
/// The family satisfies, with constant c1 = 1:
/// `0 <= sigma <= sqrt(z)`, `0 <= sigma' <= min(1/(2 eta), 1/(2 sqrt z))`,
/// `sigma <= 1/eta`, sigma nondecreasing, `sigma(0) = 0`, and uniform
/// convergence to sqrt on compacts as eta -> 0.
pub fn sigma_half(eta: f64, zeta: f64) -> f64 {
    debug_assert!(eta > 0.0 && eta < 1.0);
    if zeta <= 0.0 {
        return 0.0;
    }
    let s = (zeta + eta * eta).sqrt() - eta;
    (eta * s).tanh() / eta
}

/// Derivative of [`sigma_half`] in zeta.
pub fn sigma_half_prime(eta: f64, zeta: f64) -> f64 {
    debug_assert!(eta > 0.0 && eta < 1.0);
    if zeta <= 0.0 {
        return 0.0;
    }
    let root = (zeta + eta * eta).sqrt();
    let s = root - eta;
    let sech2 = {
        let c = (eta * s).cosh();
        1.0 / (c * c)
    };
    sech2 * 0.5 / root
}

/// sigma^eta = (sigma^{1/2,eta})^2.
pub fn sigma(eta: f64, zeta: f64) -> f64 {
    let s = sigma_half(eta, zeta);
    s * s
}

/// Entropy density Psi(z) = z log z - z with Psi(0) = 0; the log is floored
/// below `floor`.
pub fn psi_entropy(zeta: f64) -> f64 {
    psi_entropy_floored(zeta, RegParams::default().floor)
}

pub fn psi_entropy_floored(zeta: f64, floor: f64) -> f64 {
    if zeta <= 0.0 {
        return 0.0;
    }
    zeta * zeta.max(floor).ln() - zeta
}

/// Entropy integral of a density snapshot, shifted by the constant
/// -Psi(1) = 1 per unit volume so it is nonnegative and vanishes exactly
/// at the uniform unit density. The shift cancels from every entropy
/// difference.
pub fn entropy(rho: &ScalarField, floor: f64) -> f64 {
    rho.grid.cell_volume()
        * rho
            .values
            .iter()
            .map(|&v| psi_entropy_floored(v, floor) + 1.0)
            .sum::<f64>()
}

/// Continuous piecewise-linear window zeta^M: 0 on [0, 1/M], rises linearly
/// to 1 on [1/M, 2/M], equals 1 on [2/M, M], falls as M + 1 - |x| on
/// [M, M+1] and vanishes beyond.
pub fn zeta_trunc(m: f64, xi: f64) -> f64 {
    assert!(m > 0.0);
    let x = xi.abs();
    if x <= 1.0 / m {
        0.0
    } else if x <= 2.0 / m {
        m * (x - 1.0 / m)
    } else if x <= m {
        1.0
    } else if x <= m + 1.0 {
        m + 1.0 - x
    } else {
        0.0
    }
}

fn log_clip(m: f64, zeta: f64) -> f64 {
    if zeta <= 0.0 {
        -m
    } else {
        zeta.ln().clamp(-m, m)
    }
}

/// Truncated-and-mollified logarithm: clip log to [-M, M] (with -M below 0),
/// then convolve with a compactly supported bump of width `eps_mollify`.
/// The convolution is evaluated by Simpson quadrature.
pub fn log_trunc(m: u32, eps_mollify: f64, xi: f64) -> f64 {
    assert!(eps_mollify > 0.0 && eps_mollify < 1.0);
    let m = m as f64;
    // normalized bump on [-1,1]
    let bump = |u: f64| -> f64 {
        if u.abs() >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - u * u)).exp()
        }
    };
    const NQ: usize = 200; // even, Simpson
    let du = 2.0 / NQ as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..=NQ {
        let u = -1.0 + i as f64 * du;
        let w = if i == 0 || i == NQ {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let b = w * bump(u);
        num += b * log_clip(m, xi - eps_mollify * u);
        den += b;
    }
    num / den
}

/// Smoothstep bridge psi_delta: 0 on [0, delta/2], 1 on [delta, inf),
/// cubic smoothstep in between, |psi'| <= 3/delta.
pub fn psi_delta(delta: f64, zeta: f64) -> f64 {
    assert!(delta > 0.0 && delta < 1.0);
    if zeta <= delta / 2.0 {
        0.0
    } else if zeta >= delta {
        1.0
    } else {
        let t = (zeta - delta / 2.0) / (delta / 2.0);
        t * t * (3.0 - 2.0 * t)
    }
}

/// h_delta(z) = psi_delta(z) * z, the positivity cutoff, 0 <= h_delta <= z.
pub fn h_delta(delta: f64, zeta: f64) -> f64 {
    psi_delta(delta, zeta) * zeta
}

/// Band-restricted dissipation mass of a trajectory:
/// `int_0^T h^d sum_x 1_{lo < rho < hi} |grad rho|^2 dt`, time quadrature
/// over the stored snapshots. This is the discrete surrogate of the
/// kinetic-measure band mass.
pub fn theta_window_mass(traj: &Trajectory, lo: f64, hi: f64) -> f64 {
    assert!(lo < hi);
    let mut acc = 0.0;
    for (i, snap) in traj.snapshots.iter().enumerate() {
        let dt = traj.snapshot_dt(i);
        if dt == 0.0 {
            continue;
        }
        let grad = snap.gradient();
        let g2 = grad.norm_sq_pointwise();
        let hd = snap.grid.cell_volume();
        let mut sum = 0.0;
        for (v, g) in snap.values.iter().zip(&g2.values) {
            if *v > lo && *v < hi {
                sum += g;
            }
        }
        acc += dt * hd * sum;
    }
    acc
}

/// Truncated series metric on paths:
/// `D(u,v) = sum_{k<=k_max} 2^{-k} r_k / (1 + r_k)` with
/// `r_k = || h_{1/k}(u) - h_{1/k}(v) ||_{L^1([0,T];L^1)}`.
/// The dropped tail is bounded by `2^{-k_max}`.
pub fn path_metric_d(u: &Trajectory, v: &Trajectory, k_max: usize) -> Result<f64> {
    assert!(k_max >= 1);
    if u.snapshots.len() != v.snapshots.len() {
        return Err(param_err("trajectories", "snapshot meshes differ"));
    }
    let mut total = 0.0;
    for k in 1..=k_max {
        let delta = 1.0 / k as f64;
        let mut rk = 0.0;
        for (i, (su, sv)) in u.snapshots.iter().zip(&v.snapshots).enumerate() {
            su.grid.check_same(&sv.grid)?;
            let dt = u.snapshot_dt(i);
            let hd = su.grid.cell_volume();
            let mut l1 = 0.0;
            for (a, b) in su.values.iter().zip(&sv.values) {
                l1 += (h_delta(delta, *a) - h_delta(delta, *b)).abs();
            }
            rk += dt * hd * l1;
        }
        total += 2.0f64.powi(-(k as i32)) * rk / (1.0 + rk);
    }
    Ok(total)
}
